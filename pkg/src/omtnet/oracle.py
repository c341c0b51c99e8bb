"""Brute-force check of the adiabatic elimination.

Qubit, mechanical mode and cavity mode are kept in a truncated Fock space
and the full linearised Lindblad equation is integrated directly. The
decay and heating of the qubit are then compared with the effective
coefficients of ``interface``.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import _kernels, interface, om_node
from .errors import AdiabaticityError, TruncationError

MAX_DIM = 200
LEAK_TOL = 1e-3


@dataclass(frozen=True)
class FullSystemConfig:
    node: om_node.LinearizedNode
    qubit: interface.QubitParams
    n_trunc: int = 5       # Fock levels kept per bosonic mode

    def __post_init__(self):
        if self.n_trunc < 2:
            raise ValueError("n_trunc must be at least 2")
        if 2 * self.n_trunc ** 2 > MAX_DIM:
            raise ValueError(f"2 n_trunc^2 = {2 * self.n_trunc ** 2} exceeds {MAX_DIM}")

    @property
    def dim(self):
        return 2 * self.n_trunc ** 2

    def with_trunc(self, n):
        return FullSystemConfig(node=self.node, qubit=self.qubit, n_trunc=n)


@dataclass(frozen=True)
class OracleTrajectory:
    t: np.ndarray
    p_excited: np.ndarray
    coherence: np.ndarray     # <sigma^-> in the simulation frame
    top_fock: float           # largest population seen in a top Fock level
    trace_error: float
    meta: dict = field(default_factory=dict)


def gamma_op(node):
    return om_node.normal_modes(om_node.drift_matrix(node)).gamma_op


def _operators(n):
    a = sparse.diags(np.sqrt(np.arange(1, n)), 1, format="csr", dtype=complex)
    eye_n = sparse.identity(n, format="csr", dtype=complex)
    eye_q = sparse.identity(2, format="csr", dtype=complex)
    sm = sparse.csr_matrix(np.array([[0, 1], [0, 0]], dtype=complex))  # |g><e|
    b = sparse.kron(sparse.kron(eye_q, a), eye_n, format="csr")
    c = sparse.kron(sparse.kron(eye_q, eye_n), a, format="csr")
    s = sparse.kron(sparse.kron(sm, eye_n), eye_n, format="csr")
    return b, c, s


def build_system(cfg):
    """(H, jumps, frame) of the qubit + node system.

    With zeta = 0 the total excitation number is conserved and the
    frame rotating at omega_q for all three modes removes the fast
    frequencies; otherwise the laser frame is used.
    """
    nd, q = cfg.node, cfg.qubit
    p = nd.base
    b, c, s = _operators(cfg.n_trunc)
    bd, cd, sp = b.getH(), c.getH(), s.getH()
    G = complex(nd.G)
    shift = q.omega_q if p.zeta == 0 else 0.0
    frame = "omega_q" if p.zeta == 0 else "laser"
    h = ((p.omega_r - shift) * (bd @ b) + (nd.delta_c_eff - shift) * (cd @ c)
         + G * (cd @ b) + G.conjugate() * (bd @ c)
         + 0.5 * q.lam * (s @ bd + sp @ b))
    if p.zeta:
        h = h + G * (cd @ bd) + G.conjugate() * (c @ b)
    if shift == 0.0:
        h = h + 0.5 * q.omega_q * (sp @ s - s @ sp)
    jumps = []
    if p.kappa > 0:
        jumps.append(math.sqrt(2 * p.kappa) * c)
    if p.gamma_m > 0:
        jumps.append(math.sqrt(p.gamma_m * (p.n_m + 1)) * b)
        if p.n_m > 0:
            jumps.append(math.sqrt(p.gamma_m * p.n_m) * bd)
    if q.dephasing_rate > 0:
        jumps.append(math.sqrt(0.5 * q.dephasing_rate) * (sp @ s - s @ sp))
    return h.tocsr(), [j.tocsr() for j in jumps], frame


def _rate_bound(h, jumps):
    heff = h - 0.5j * sum((j.getH() @ j for j in jumps), sparse.csr_matrix(h.shape))
    return float(abs(heff).sum(axis=1).max()) + sum(float(abs(j).sum(axis=1).max()) ** 2
                                                     for j in jumps)


def initial_state(cfg, qubit_state="excited"):
    n = cfg.n_trunc
    if isinstance(qubit_state, str):
        rq = np.diag([0.0, 1.0] if qubit_state == "excited" else [1.0, 0.0]).astype(complex)
    else:
        rq = np.asarray(qubit_state, dtype=complex)
    vac = np.zeros((n * n, n * n), dtype=complex)
    vac[0, 0] = 1.0
    return np.kron(rq, vac)


def full_me_simulate(cfg, t_final, qubit_state="excited", dt_factor=1.0,
                     n_samples=400, backend=None, check_leak=True):
    """Integrate the full Lindblad equation up to ``t_final``.

    Raises TruncationError when a top Fock level holds more than
    LEAK_TOL population at any sample.
    """
    h, jumps, frame = build_system(cfg)
    heff = h - 0.5j * sum((j.getH() @ j for j in jumps), sparse.csr_matrix(h.shape))
    rate = _rate_bound(h, jumps)
    dt_max = dt_factor / rate
    n_steps = max(int(math.ceil(t_final / dt_max)), 1)
    stride = max(n_steps // n_samples, 1)
    n_steps = stride * int(math.ceil(n_steps / stride))
    dt = t_final / n_steps
    rho0 = initial_state(cfg, qubit_state)
    snaps = _kernels.lindblad_rk4(heff.tocsr(), jumps, rho0, dt, n_steps, stride,
                                  backend=backend)
    n = cfg.n_trunc
    t = dt * stride * np.arange(snaps.shape[0])
    diag = np.real(np.einsum("tii->ti", snaps)).reshape(-1, 2, n, n)
    p_exc = diag[:, 1].sum(axis=(1, 2))
    top = max(float(diag[:, :, -1, :].sum(axis=(1, 2)).max()),
              float(diag[:, :, :, -1].sum(axis=(1, 2)).max()))
    if check_leak and top > LEAK_TOL:
        raise TruncationError(f"top Fock level population {top:.2e} exceeds {LEAK_TOL}")
    # <sigma^-> = Tr(sigma^- rho) = rho_{e,g} summed over the oscillator states
    m = n * n
    coh = np.einsum("tii->t", snaps[:, m:, :m])
    tr_err = float(np.abs(np.einsum("tii->t", snaps) - 1.0).max())
    return OracleTrajectory(t=t, p_excited=p_exc, coherence=coh, top_fock=top,
                            trace_error=tr_err,
                            meta={"frame": frame, "dt": dt, "n_steps": n_steps,
                                  "dim": cfg.dim})


def fit_decay(t, p, offset, lo, hi):
    """Rate of p - offset ~ A exp(-rate t) by log-linear least squares on [lo, hi]."""
    sel = (t >= lo) & (t <= hi)
    y = p[sel] - offset
    if sel.sum() < 3 or np.any(y <= 0):
        raise ValueError("fit window has fewer than 3 points or non-positive data")
    slope, _ = np.polyfit(t[sel], np.log(y), 1)
    return -slope


def compare_effective(cfg, t_final_units=3.0, check_validity=True, **kw):
    """Full simulation against the effective decay rate and heating.

    The fitted relaxation rate is compared with Gamma (2 N0 + 1), the
    population at the end with the steady value N0/(2 N0 + 1).
    """
    ratio = cfg.qubit.lam / gamma_op(cfg.node)
    if check_validity and ratio > 0.1:
        raise AdiabaticityError(f"lam/gamma_op = {ratio:.3g} > 0.1")
    eff = interface.effective_coefficients(cfg.node, cfg.qubit, warn=False)
    n0 = eff.n0
    rate_eff = eff.gamma * (2 * n0 + 1)
    ss = n0 / (2 * n0 + 1)
    tr = full_me_simulate(cfg, t_final_units / rate_eff, **kw)
    hi = min(3.0, t_final_units) / rate_eff
    rate_fit = fit_decay(tr.t, tr.p_excited, ss, 0.1 / rate_eff, hi)
    gamma_fit = rate_fit / (2 * n0 + 1)
    return {
        "gamma_fit": gamma_fit,
        "gamma_eff": eff.gamma,
        "gamma_rel_error": abs(gamma_fit - eff.gamma) / eff.gamma,
        "pe_final": float(tr.p_excited[-1]),
        "n0": n0,
        "pe_steady_pred": ss,
        "pe_abs_error": abs(float(tr.p_excited[-1]) - ss),
        "lam_over_gamma_op": ratio,
        "top_fock": tr.top_fock,
        "trajectory": tr,
    }


def truncation_convergence(cfg, t_final_units=3.0, step=2, **kw):
    """Relative change of the fitted rate when n_trunc grows by ``step``."""
    a = compare_effective(cfg, t_final_units, **kw)
    b = compare_effective(cfg.with_trunc(cfg.n_trunc + step), t_final_units, **kw)
    return abs(a["gamma_fit"] - b["gamma_fit"]) / abs(b["gamma_fit"]), a, b


def preset_config(kappa=0.05, lam_ratio=0.1, thermal_over_gamma=0.0, n_m=100.0,
                  zeta=0, n_trunc=5, omega_r=1.0):
    """Resonant strong-coupling node with lam = lam_ratio * gamma_op.

    The node sits on the coupling-tuning path at G = 3 kappa/2 with the
    qubit on the lower normal mode. ``thermal_over_gamma`` sets
    gamma_m n_m in units of the effective decay rate.
    """
    delta_bare, omega_q, g_res = interface.vary_g_geometry(omega_r, kappa)
    base = om_node.OMNodeParams(omega_r=omega_r, delta_c=delta_bare, kappa_f=kappa,
                                zeta=zeta)
    nd = interface.node_on_g_path(base, g_res, delta_bare)
    lam = lam_ratio * gamma_op(nd)
    q = interface.QubitParams(omega_q=omega_q, lam=lam)
    if thermal_over_gamma > 0:
        g_eff = interface.effective_coefficients(nd, q, warn=False).gamma
        gm = thermal_over_gamma * g_eff / n_m
        base = om_node.OMNodeParams(omega_r=omega_r, delta_c=delta_bare, kappa_f=kappa,
                                    gamma_m=gm, n_m=n_m, zeta=zeta)
        nd = interface.node_on_g_path(base, g_res, delta_bare)
    return FullSystemConfig(node=nd, qubit=q, n_trunc=n_trunc)
