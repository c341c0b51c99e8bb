"""Command-line entry point: ``omtnet <command> --config <path>``.

Every command writes CSV files (``#`` metadata lines, then a header row)
and, where it makes sense, a key=value summary that is also printed.
Exit codes: 0 success, 2 config error, 3 physics-regime error,
4 numerical failure.
"""
import argparse
import csv
import math
import os
import sys
import warnings
from dataclasses import replace

import numpy as np

from . import interface, om_node, onchip, oracle, protocols
from .config import UNIT_NOTE, ExperimentConfig, load_config
from .errors import ConfigError, NumericsError, PhysicsRegimeError

EXIT_OK, EXIT_CONFIG, EXIT_PHYSICS, EXIT_NUMERICS = 0, 2, 3, 4

DEFAULT_SWEEPS = {
    "kappa0": [0.02, 0.05, 0.1],        # kappa_0 / kappa
    "thermal": [0.005, 0.01, 0.02],     # gamma_m N_m / kappa
    "stokes": [0.03, 0.05, 0.08],       # kappa / omega_r
    "dephasing": [0.002, 0.005, 0.01],  # kappa / (lam^2 T2)
}
SWEEP_LABELS = {"kappa0": "kappa0_slope", "thermal": "C1", "stokes": "C2",
                "dephasing": "C3"}


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, command, cfg, columns, rows, meta=None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# omtnet {command}\n")
        fh.write(f"# config_hash={cfg.config_hash}\n")
        fh.write(f"# units: {UNIT_NOTE}\n")
        for k, v in (meta or {}).items():
            fh.write(f"# {k}={_fmt(v)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(x) for x in r])
    return path


def write_summary(path, summary):
    text = "".join(f"{k}={_fmt(v)}\n" for k, v in summary.items())
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return text


# --- fig2 ----------------------------------------------------------------------

def _node_base(cfg):
    s = cfg.section("node")
    kappa = s.get("kappa", 0.05)
    kappa_0 = s.get("kappa_0", 0.0)
    if kappa_0 > kappa:
        raise ConfigError("[node] kappa_0 exceeds kappa")
    return om_node.OMNodeParams(omega_r=1.0, delta_c=s.get("delta_c", 1.0),
                                kappa_f=kappa - kappa_0, kappa_0=kappa_0,
                                gamma_m=s.get("gamma_m", 0.0), n_m=s.get("n_m", 0.0),
                                zeta=s.get("zeta", 0))


def gamma_grid(base, G, dce, wq, lam=1.0):
    """Gamma/lam^2 on a stack of (G, effective detuning) times qubit frequencies.

    Unstable drift matrices give nan; G = 0 uses the bare mechanical response.
    """
    G = np.asarray(G, dtype=float)
    dce = np.asarray(dce, dtype=float)
    wq = np.asarray(wq, dtype=float)
    out = np.full((G.size, wq.size), np.nan)
    if lam == 0:
        out[:] = 0.0
        return out
    m = om_node.drift_matrices(base, G, dce)
    stable = np.all(np.linalg.eigvals(m).real > 0, axis=-1)
    hg = 0.5 * base.gamma_m
    for i in range(G.size):
        if G[i] == 0:
            den = hg ** 2 + (base.omega_r - wq) ** 2
            out[i] = 0.5 * np.where(den > 0, hg / np.where(den > 0, den, 1.0), 0.0)
        elif stable[i]:
            a11 = om_node.response_11(np.broadcast_to(m[i], wq.shape + (4, 4)), wq)
            out[i] = 0.5 * a11.real
    return out


def cmd_fig2(cfg, out_dir, workers=None):
    base = _node_base(cfg)
    lam = cfg.get("qubit", "lam", 1.0)
    f = cfg.section("fig2")
    k = base.kappa
    g_res = f.get("g_res", 1.5 * k)
    wq = np.linspace(f.get("wq_min", 1.0 - 6 * k), f.get("wq_max", 1.0 + 6 * k),
                     f.get("n_wq", 121))
    G = np.linspace(0.0, f.get("g_max", 4 * k), f.get("n_g", 81))
    dce_fixed = base.delta_c
    grid_g = gamma_grid(base, G, np.full(G.shape, dce_fixed), wq, lam)
    rows = [(g, w, grid_g[i, j]) for i, g in enumerate(G) for j, w in enumerate(wq)]
    paths = [write_csv(os.path.join(out_dir, "fig2_vary_G.csv"), "fig2", cfg,
                       ["control1", "control2", "Gamma_over_lambda2"], rows,
                       {"control1": "G", "control2": "omega_q",
                        "delta_c_eff": dce_fixed, "kappa": k, "zeta": base.zeta,
                        "n_unstable": int(np.isnan(grid_g).sum())})]

    power = interface.vary_dc_power(1.0, k, g_res)
    dc = np.linspace(f.get("dc_min", 1.0 - 6 * k),
                     f.get("dc_max", 1.0 + 6 * k + 2 * g_res ** 2), f.get("n_dc", 61))
    x = interface.lowest_power_coupling(dc, power, 1.0, k)
    grid_d = gamma_grid(base, np.sqrt(x), dc - 2.0 * x, wq, lam)
    rows = [(d, w, grid_d[i, j]) for i, d in enumerate(dc) for j, w in enumerate(wq)]
    paths.append(write_csv(os.path.join(out_dir, "fig2_vary_dc.csv"), "fig2", cfg,
                           ["control1", "control2", "Gamma_over_lambda2"], rows,
                           {"control1": "delta_c_bare", "control2": "omega_q",
                            "power": power, "branch": "lowest amplitude",
                            "kappa": k, "zeta": base.zeta,
                            "n_unstable": int(np.isnan(grid_d).sum())}))
    # ridge: qubit on the lower normal mode at the strongest coupling of the grid
    summary = {"reference_1_over_2kappa": 1 / (2 * k)}
    top = om_node.LinearizedNode(base=base, G=complex(G[-1]), delta_c_eff=dce_fixed)
    try:
        w_lo = om_node.normal_modes(om_node.drift_matrix(top)).omega_minus
        summary["ridge_G"] = G[-1]
        summary["ridge_omega_q"] = w_lo
        summary["ridge_Gamma_over_lambda2"] = float(gamma_grid(base, G[-1:], [dce_fixed],
                                                               [w_lo], lam)[0, 0])
    except PhysicsRegimeError:
        summary["ridge_Gamma_over_lambda2"] = math.nan
    return paths, summary


# --- state transfer ---------------------------------------------------------------

_TRANSFER_KEYS = ("kappa", "lam", "kappa_0", "thermal_rate", "n_m", "zeta", "t2",
                  "mode", "family", "tp_units", "leak_target", "n_sched", "guard")


def transfer_config(cfg, default_preset="ideal"):
    s = cfg.section("transfer")
    name = s.pop("preset", default_preset)
    tc = protocols.transfer_preset(name)
    over = {k: v for k, v in s.items() if k in _TRANSFER_KEYS}
    if over.get("mode", tc.mode) not in protocols.MODES:
        raise ConfigError(f"[transfer] mode must be one of {protocols.MODES}")
    if over.get("family", tc.family) not in protocols.FAMILIES:
        raise ConfigError(f"[transfer] family must be one of {protocols.FAMILIES}")
    if over.get("guard", tc.guard) not in ("raise", "warn"):
        raise ConfigError("[transfer] guard must be 'raise' or 'warn'")
    tc = replace(tc, **over)
    if tc.kappa_0 > tc.kappa:
        raise ConfigError("[transfer] kappa_0 exceeds kappa")
    return name, tc


def cmd_transfer(cfg, out_dir, workers=None):
    name, tc = transfer_config(cfg)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = protocols.run_state_transfer(tc, attribution=True, workers=workers or 1)
    s = res.schedule
    rows = [(s.t[i], s.gamma1[i], s.gamma2[i], s.control[i, 0], s.control[i, 1],
             s.G[i, 0], s.G[i, 1], s.delta_c_eff[i, 0], s.delta_c_eff[i, 1],
             s.shifts[i, 0], s.shifts[i, 1], s.phi[i]) for i in range(s.t.size)]
    path = write_csv(os.path.join(out_dir, "transfer.csv"), "transfer", cfg,
                     ["t", "gamma1", "gamma2", "control1", "control2", "G1", "G2",
                      "delta_c_eff1", "delta_c_eff2", "qubit_shift1", "qubit_shift2",
                      "phi"], rows,
                     {"preset": name, "mode": tc.mode, "family": tc.family})
    summary = {"preset": name, "F_bar": res.fidelity}
    for k, v in res.attribution.items():
        summary[f"infidelity_{k}"] = v
    summary.update(gamma_max=res.gamma_max, dark_max_over_gamma_max=res.dark_max,
                   adiabaticity=s.adiabaticity, trace_drift=res.trace_drift,
                   phase_convention=res.meta["phase_convention"],
                   gamma_m_convention=res.meta["gamma_convention"],
                   warnings=len(caught))
    return [path], summary


def cmd_sweep_transfer(cfg, out_dir, workers=None):
    name, tc = transfer_config(cfg)
    sw = cfg.section("sweep")
    kinds = sw.get("kinds", list(DEFAULT_SWEEPS))
    sweeps = {}
    for kind in kinds:
        sweeps[kind] = protocols.run_sweep(kind, sw.get(kind, DEFAULT_SWEEPS[kind]), tc,
                                           workers=workers)
    rows = [(kind, x, y) for kind in kinds for x, y in sweeps[kind]]
    path = write_csv(os.path.join(out_dir, "sweep_transfer.csv"), "sweep_transfer", cfg,
                     ["kind", "x", "infidelity"], rows,
                     {"preset": name, "mode": tc.mode, "family": tc.family,
                      "x_kappa0": "kappa_0/kappa", "x_thermal": "gamma_m N_m/kappa",
                      "x_stokes": "kappa^2/omega_r^2", "x_dephasing": "kappa/(lam^2 T2)"})
    fits = protocols.fit_infidelity_coefficients(sweeps)
    summary = {"mode": tc.mode}
    summary.update({SWEEP_LABELS[k]: v for k, v in fits.items()})
    return [path], summary


# --- on-chip ------------------------------------------------------------------

_ONCHIP_KEYS = ("G", "K", "lam", "kappa_0", "kappa_0f", "zeta", "n_nodes")


def onchip_params(cfg):
    s = cfg.section("onchip")
    name = s.get("preset", "charge")
    p, t2 = onchip.preset(name, zeta=s.get("zeta", 1), n_nodes=s.get("n_nodes", 2))
    over = {k: s[k] for k in _ONCHIP_KEYS if k in s}
    n_m = s.get("n_m", p.n_m)
    thermal = s.get("thermal_rate", p.thermal_rate)
    over["n_m"] = n_m
    over["gamma_m"] = thermal / n_m if n_m > 0 else 0.0
    p = replace(p, **over)
    return name, p, s.get("t2", t2)


def cmd_onchip_modes(cfg, out_dir, workers=None):
    name, p, _ = onchip_params(cfg)
    records = onchip.normal_mode_table(p)
    keys = ("omega", "gamma", "lam_eff", "n_th", "n_nonrwa")
    cols = ["mode"]
    for k in keys:
        cols += [k, f"{k}_closed"]
    rows = []
    for r in records:
        row = [r.label]
        for k in keys:
            row += [getattr(r, k), r.closed.get(k, math.nan)]
        rows.append(row)
    path = write_csv(os.path.join(out_dir, "onchip_modes.csv"), "onchip_modes", cfg,
                     cols, rows, {"preset": name, "frame": "RWA blocks"})
    summary = {"preset": name}
    for sym, w in onchip.weight_sums(records).items():
        summary[f"weight_sum_{sym}_over_lam2"] = w / p.lam ** 2 if p.lam > 0 else math.nan
    for r in records:
        summary[f"max_rel_dev{r.label}"] = max(r.deviation.get(k, 0.0)
                                               for k in ("omega", "gamma"))
    return [path], summary


def cmd_onchip_fidelity(cfg, out_dir, workers=None):
    name, p, t2 = onchip_params(cfg)
    n_points = cfg.get("fidelity", "n_points", 400)
    rows = []
    summary = {"preset": name}
    for tag, t in (("inf", math.inf), ("t2", t2)):
        sc = onchip.fidelity_scan(p, t, n_points=n_points)
        for i, w in enumerate(sc.omega_q):
            rows.append((w, t, sc.full[i], sc.lorentzian[i], bool(sc.valid[i])))
        v = sc.valid & np.isfinite(sc.full) & np.isfinite(sc.lorentzian)
        summary[f"{tag}_n_valid"] = int(v.sum())
        summary[f"{tag}_max_full_valid"] = float(sc.full[v].max()) if v.any() else math.nan
        summary[f"{tag}_max_full_all"] = float(np.nanmax(sc.full))
        diff = sc.full[v] - sc.lorentzian[v]
        summary[f"{tag}_max_abs_diff"] = float(np.abs(diff).max()) if v.any() else math.nan
        summary[f"{tag}_min_full_minus_lor"] = float(diff.min()) if v.any() else math.nan
    path = write_csv(os.path.join(out_dir, "onchip_fidelity.csv"), "onchip_fidelity", cfg,
                     ["omega_q", "t2", "F_full", "F_lorentzian", "valid"], rows,
                     {"preset": name, "band_halfwidth": f"{onchip.BAND} lam_eff",
                      "F_full": "full elimination (solid)",
                      "F_lorentzian": "independent modes (dashed)"})
    return [path], summary


# --- oracle ---------------------------------------------------------------------

def cmd_oracle_check(cfg, out_dir, workers=None):
    o = cfg.section("oracle")
    kw = dict(kappa=o.get("kappa", 0.05), lam_ratio=o.get("lam_ratio", 0.1),
              n_m=o.get("n_m", 100.0), n_trunc=o.get("n_trunc", 5))
    units = o.get("t_final_units", 3.0)
    conv, a, _ = oracle.truncation_convergence(oracle.preset_config(**kw), units)
    th = oracle.compare_effective(
        oracle.preset_config(thermal_over_gamma=o.get("thermal_over_gamma", 0.2), **kw),
        o.get("thermal_t_final_units", 6.0))
    tr = a["trajectory"]
    path = write_csv(os.path.join(out_dir, "oracle_check.csv"), "oracle_check", cfg,
                     ["t", "p_excited"], list(zip(tr.t, tr.p_excited)),
                     {"n_trunc": kw["n_trunc"], "frame": tr.meta["frame"],
                      "dt": tr.meta["dt"]})
    summary = {
        "lam_over_gamma_op": a["lam_over_gamma_op"],
        "gamma_fit": a["gamma_fit"], "gamma_eff": a["gamma_eff"],
        "gamma_rel_error": a["gamma_rel_error"],
        "truncation_change": conv,
        "thermal_n0": th["n0"], "thermal_pe_final": th["pe_final"],
        "thermal_pe_pred": th["pe_steady_pred"], "thermal_abs_error": th["pe_abs_error"],
        "top_fock": max(a["top_fock"], th["top_fock"]),
    }
    return [path], summary


COMMANDS = {
    "fig2": cmd_fig2,
    "transfer": cmd_transfer,
    "sweep_transfer": cmd_sweep_transfer,
    "onchip_modes": cmd_onchip_modes,
    "onchip_fidelity": cmd_onchip_fidelity,
    "oracle_check": cmd_oracle_check,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="omtnet", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="sectioned key=value file; defaults if omitted")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--workers", type=int, default=None,
                    help="worker processes for sweeps (default: all cores)")
    return ap


def run(command, cfg, out_dir=".", workers=None):
    os.makedirs(out_dir, exist_ok=True)
    paths, summary = COMMANDS[command](cfg, out_dir, workers)
    text = write_summary(os.path.join(out_dir, f"{command}_summary.txt"), summary)
    return paths, summary, text


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        cfg = load_config(args.config) if args.config else ExperimentConfig(sections={})
        _, _, text = run(args.command, cfg, args.out, args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PhysicsRegimeError as exc:
        print(f"physics regime error: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICS
    except (ValueError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
