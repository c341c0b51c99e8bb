"""Experiment configuration: sectioned key=value text with unit suffixes.

Frequencies and rates are written either as plain numbers, already in
units of omega_r, or with a Hz/kHz/MHz/GHz suffix meaning value/2pi in Hz;
suffixed values are divided by ``[units] f_ref`` (omega_r/2pi in Hz).
Times take s/ms/us/ns suffixes and become T * 2pi f_ref.
"""
import configparser
import hashlib
import json
import math
import re
from dataclasses import dataclass

from .errors import ConfigError

FREQ_UNITS = {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9}
TIME_UNITS = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9}
UNIT_NOTE = ("frequencies in units of omega_r = 2pi f_ref; suffixed inputs are "
             "value/2pi in Hz; times in units of 1/omega_r")

_NUM = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|inf)\s*([a-zA-Z]*)\s*$")

# kinds: rate (nonnegative, frequency units), freq (frequency units, any sign),
# time, float, int, str, floats (comma list), strs, bool
SCHEMA = {
    "units": {"f_ref": "hz"},
    "node": {"kappa": "rate", "kappa_0": "rate", "delta_c": "freq", "G": "rate",
             "gamma_m": "rate", "n_m": "float", "zeta": "int"},
    "qubit": {"lam": "rate", "omega_q": "freq", "t2": "time"},
    "fig2": {"g_max": "rate", "n_g": "int", "wq_min": "freq", "wq_max": "freq",
             "n_wq": "int", "dc_min": "freq", "dc_max": "freq", "n_dc": "int",
             "g_res": "rate"},
    "transfer": {"preset": "str", "kappa": "rate", "lam": "rate", "kappa_0": "rate",
                 "thermal_rate": "rate", "n_m": "float", "zeta": "int", "t2": "time",
                 "mode": "str", "family": "str", "tp_units": "float",
                 "leak_target": "float", "n_sched": "int", "guard": "str"},
    "sweep": {"kinds": "strs", "kappa0": "floats", "thermal": "floats",
              "stokes": "floats", "dephasing": "floats"},
    "onchip": {"preset": "str", "G": "rate", "K": "rate", "lam": "rate",
               "kappa_0": "rate", "kappa_0f": "rate", "thermal_rate": "rate",
               "n_m": "float", "zeta": "int", "n_nodes": "int", "t2": "time"},
    "fidelity": {"n_points": "int"},
    "oracle": {"kappa": "rate", "lam_ratio": "float", "thermal_over_gamma": "float",
               "n_m": "float", "n_trunc": "int", "t_final_units": "float",
               "thermal_t_final_units": "float"},
}

TRANSFER_PRESETS = ("spin", "charge", "ideal")
ONCHIP_PRESETS = ("charge", "spin")


@dataclass(frozen=True)
class ExperimentConfig:
    sections: dict          # section -> {key: parsed value}
    source: str = ""

    def section(self, name):
        return dict(self.sections.get(name, {}))

    def get(self, section, key, default=None):
        return self.sections.get(section, {}).get(key, default)

    @property
    def config_hash(self):
        canon = json.dumps(self.sections, sort_keys=True, default=repr)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _split_number(text, section, key):
    m = _NUM.match(text)
    if not m:
        raise ConfigError(f"[{section}] {key}: cannot parse number {text!r}")
    return float(m.group(1)), m.group(2).lower()


def _convert(kind, text, f_ref, section, key):
    where = f"[{section}] {key}"
    if kind == "str":
        return text.strip()
    if kind == "strs":
        return [s.strip() for s in text.split(",") if s.strip()]
    if kind == "bool":
        t = text.strip().lower()
        if t not in ("true", "false", "yes", "no", "1", "0"):
            raise ConfigError(f"{where}: expected a boolean, got {text!r}")
        return t in ("true", "yes", "1")
    if kind == "int":
        try:
            return int(text.strip())
        except ValueError:
            raise ConfigError(f"{where}: expected an integer, got {text!r}") from None
    if kind == "floats":
        return [_convert("float", s, f_ref, section, key) for s in text.split(",") if s.strip()]
    value, unit = _split_number(text, section, key)
    if kind == "float":
        if unit:
            raise ConfigError(f"{where}: unexpected unit {unit!r}")
        return value
    if kind == "hz":
        if unit and unit not in FREQ_UNITS:
            raise ConfigError(f"{where}: unknown frequency unit {unit!r}")
        return value * FREQ_UNITS.get(unit, 1.0)
    if kind in ("rate", "freq"):
        if unit:
            if unit not in FREQ_UNITS:
                raise ConfigError(f"{where}: unknown frequency unit {unit!r}")
            if f_ref is None:
                raise ConfigError(f"{where}: unit suffix needs [units] f_ref")
            value = value * FREQ_UNITS[unit] / f_ref
        if kind == "rate" and value < 0:
            raise ConfigError(f"{where}: rates must be nonnegative")
        return value
    if kind == "time":
        if unit:
            if unit not in TIME_UNITS:
                raise ConfigError(f"{where}: unknown time unit {unit!r}")
            if f_ref is None:
                raise ConfigError(f"{where}: unit suffix needs [units] f_ref")
            value = value * TIME_UNITS[unit] * 2 * math.pi * f_ref
        if not value > 0:
            raise ConfigError(f"{where}: times must be positive")
        return value
    raise ConfigError(f"{where}: unknown field kind {kind!r}")


def parse_config(text):
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"),
                                   interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    f_ref = None
    if cp.has_option("units", "f_ref"):
        f_ref = _convert("hz", cp.get("units", "f_ref"), None, "units", "f_ref")
        if not f_ref > 0:
            raise ConfigError("[units] f_ref must be positive")
    sections = {}
    for name in cp.sections():
        if name not in SCHEMA:
            raise ConfigError(f"unknown section [{name}]")
        fields = SCHEMA[name]
        out = {}
        for key, raw in cp.items(name):
            if key not in fields:
                raise ConfigError(f"[{name}] unknown key {key!r}")
            out[key] = _convert(fields[key], raw, f_ref, name, key)
        sections[name] = out
    _validate(sections)
    return ExperimentConfig(sections=sections, source=text)


def _validate(sections):
    tp = sections.get("transfer", {}).get("preset")
    if tp is not None and tp not in TRANSFER_PRESETS:
        raise ConfigError(f"unknown transfer preset {tp!r}")
    op = sections.get("onchip", {}).get("preset")
    if op is not None and op not in ONCHIP_PRESETS:
        raise ConfigError(f"unknown onchip preset {op!r}")
    for name, sec in sections.items():
        if "zeta" in sec and sec["zeta"] not in (0, 1):
            raise ConfigError(f"[{name}] zeta must be 0 or 1")
    kinds = sections.get("sweep", {}).get("kinds", [])
    for k in kinds:
        if k not in ("kappa0", "thermal", "stokes", "dephasing"):
            raise ConfigError(f"[sweep] unknown kind {k!r}")
        for v in sections["sweep"].get(k, []):
            if v < 0:
                raise ConfigError(f"[sweep] {k}: values must be nonnegative")


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)
