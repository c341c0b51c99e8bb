"""A single optomechanical transducer: classical steady state, linearised
drift matrix, response matrix, normal modes and stability.

Basis of the linearised fluctuations: v = (b, c, b^+, c^+), with b the
mechanical and c the cavity mode, dv/dt = -M v + noise.
"""
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import numerics
from .errors import InstabilityError, MultistableError


@dataclass(frozen=True)
class OMNodeParams:
    omega_r: float
    delta_c: float
    g0: float = 0.0
    kappa_f: float = 0.0
    kappa_0: float = 0.0
    gamma_m: float = 0.0
    n_m: float = 0.0
    zeta: int = 0

    def __post_init__(self):
        if not self.omega_r > 0:
            raise ValueError("omega_r must be positive")
        for name in ("kappa_f", "kappa_0", "gamma_m", "n_m"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.zeta not in (0, 1):
            raise ValueError("zeta must be 0 or 1")

    @property
    def kappa(self):
        return self.kappa_f + self.kappa_0

    @property
    def thermal_rate(self):
        return self.gamma_m * self.n_m


@dataclass(frozen=True)
class ClassicalSteadyState:
    alpha: complex
    beta: complex
    delta_c_eff: float


@dataclass(frozen=True)
class LinearizedNode:
    base: OMNodeParams
    G: complex
    delta_c_eff: float

    def with_coupling(self, G=None, delta_c_eff=None):
        return replace(self,
                       G=self.G if G is None else G,
                       delta_c_eff=self.delta_c_eff if delta_c_eff is None else delta_c_eff)


@dataclass(frozen=True)
class NormalModeData:
    omega_minus: float
    omega_plus: float
    gamma_minus: float
    gamma_plus: float

    @property
    def gamma_op(self):
        return min(self.gamma_minus, self.gamma_plus)


def node(omega_r=1.0, delta_c=1.0, G=0.0, kappa_f=0.0, kappa_0=0.0,
         gamma_m=0.0, n_m=0.0, zeta=0):
    """Shortcut: a linearised node with G and the effective detuning given."""
    base = OMNodeParams(omega_r=omega_r, delta_c=delta_c, kappa_f=kappa_f,
                        kappa_0=kappa_0, gamma_m=gamma_m, n_m=n_m, zeta=zeta)
    return LinearizedNode(base=base, G=complex(G), delta_c_eff=float(delta_c))


def _cubic_roots(p, drive_abs2):
    """Admissible |alpha|^2 values: real positive roots of the steady-state cubic."""
    a = 2.0 * p.g0 ** 2 / p.omega_r
    d, k = p.delta_c, p.kappa
    coeffs = [a * a, -2.0 * d * a, k * k + d * d, -drive_abs2]
    roots = np.roots(coeffs)
    scale = max(drive_abs2 / max(k * k + d * d, 1e-300), 1e-300)
    real = [r.real for r in roots if abs(r.imag) <= 1e-7 * max(abs(r), scale)]
    return sorted(x for x in real if x > 0)


def classical_steady_state(p, drive):
    """Steady cavity and mechanical amplitudes for a constant laser drive."""
    drive = complex(drive)
    if drive == 0:
        return ClassicalSteadyState(0j, 0j, p.delta_c)
    if p.g0 == 0:
        alpha = drive / (1j * p.delta_c + p.kappa)
        return ClassicalSteadyState(alpha, 0j, p.delta_c)
    roots = _cubic_roots(p, abs(drive) ** 2)
    if len(roots) != 1:
        raise MultistableError(
            f"{len(roots)} admissible steady states; root choice is ambiguous")
    x = roots[0]
    shift = 2.0 * p.g0 ** 2 * x / p.omega_r
    alpha = drive / (1j * p.delta_c + p.kappa - 1j * shift)
    beta = -p.g0 * abs(alpha) ** 2 / p.omega_r
    return ClassicalSteadyState(alpha, complex(beta), p.delta_c - shift)


def linearize(p, drive, warn=True):
    ss = classical_steady_state(p, drive)
    if warn and abs(ss.alpha) ** 2 <= 10:
        warnings.warn(f"|alpha|^2 = {abs(ss.alpha) ** 2:.3g} <= 10: "
                      "linearisation is questionable", RuntimeWarning, stacklevel=2)
    return LinearizedNode(base=p, G=p.g0 * ss.alpha, delta_c_eff=ss.delta_c_eff)


def classical_transient(p, drive, t_grid, alpha0=0j, beta0=0j):
    """Integrate the classical amplitude equations for a sampled drive.

    ``drive`` holds the drive on ``t_grid`` (uniform); it is linearly
    interpolated at the RK4 midpoints.
    """
    t = np.asarray(t_grid, dtype=float)
    e = np.asarray(drive, dtype=complex)

    def e_at(tt):
        return np.interp(tt, t, e.real) + 1j * np.interp(tt, t, e.imag)

    def rhs(tt, y):
        a, b = y
        da = -(1j * p.delta_c + p.kappa) * a - 1j * p.g0 * 2.0 * b.real * a + e_at(tt)
        db = -(1j * p.omega_r + 0.5 * p.gamma_m) * b - 1j * p.g0 * abs(a) ** 2
        return np.array([da, db])

    y = numerics.ode_rk4(rhs, np.array([alpha0, beta0], dtype=complex), t)
    return y[:, 0], y[:, 1]


def drift_matrix(n):
    """4x4 drift matrix in the basis (b, c, b^+, c^+)."""
    p = n.base
    G = complex(n.G)
    Gc = G.conjugate()
    z = p.zeta
    wr, dc = p.omega_r, n.delta_c_eff
    hg, k = 0.5 * p.gamma_m, p.kappa
    m = np.array([
        [wr - 1j * hg, Gc, 0, z * G],
        [G, dc - 1j * k, z * G, 0],
        [0, -z * Gc, -wr - 1j * hg, -G],
        [-z * Gc, 0, -Gc, -dc - 1j * k],
    ], dtype=complex)
    return 1j * m


def drift_matrices(p, G, delta_c_eff):
    """Stack of drift matrices for arrays of (real) G and effective detuning."""
    G = np.asarray(G, dtype=complex)
    d = np.asarray(delta_c_eff, dtype=float)
    G, d = np.broadcast_arrays(G, d)
    z = p.zeta
    m = np.zeros(G.shape + (4, 4), dtype=complex)
    Gc = G.conj()
    m[..., 0, 0] = p.omega_r - 0.5j * p.gamma_m
    m[..., 0, 1] = Gc
    m[..., 0, 3] = z * G
    m[..., 1, 0] = G
    m[..., 1, 1] = d - 1j * p.kappa
    m[..., 1, 2] = z * G
    m[..., 2, 1] = -z * Gc
    m[..., 2, 2] = -p.omega_r - 0.5j * p.gamma_m
    m[..., 2, 3] = -G
    m[..., 3, 0] = -z * Gc
    m[..., 3, 2] = -Gc
    m[..., 3, 3] = -d - 1j * p.kappa
    return 1j * m


def noise_matrix(p, include_fiber=False):
    """Diagonal input-noise correlations <R_k^+ R_l> of one node.

    The fiber vacuum (2 kappa_f on c^+) is included only when asked; in a
    chain it enters through the propagated fiber input instead.
    """
    c_plus = 2.0 * (p.kappa if include_fiber else p.kappa_0)
    return np.diag([p.gamma_m * p.n_m, 0.0, p.gamma_m * (p.n_m + 1.0), c_plus]).astype(complex)


def response_matrix(m, omega):
    m = np.asarray(m, dtype=complex)
    return numerics.inverse(m - 1j * omega * np.eye(m.shape[0]))


def response_11(m, omega):
    """Stack-friendly A_11 for drift matrices of shape (..., d, d)."""
    m = np.asarray(m, dtype=complex)
    d = m.shape[-1]
    rhs = np.zeros(m.shape[:-1] + (1,), dtype=complex)
    rhs[..., 0, 0] = 1.0
    x = np.linalg.solve(m - 1j * np.asarray(omega)[..., None, None] * np.eye(d), rhs)
    return x[..., 0, 0]


def is_stable(m):
    return bool(np.all(np.linalg.eigvals(np.asarray(m)).real > 0))


def normal_modes(m):
    ed = numerics.eig(m)
    lam = ed.eigenvalues
    if np.any(lam.real <= 0):
        raise InstabilityError("drift matrix has a non-decaying mode")
    pos = lam[lam.imag > 0]
    if pos.size < 2:
        raise InstabilityError("fewer than two positive-frequency modes")
    pos = pos[np.argsort(pos.imag)]
    lo, hi = pos[0], pos[-1]
    return NormalModeData(omega_minus=lo.imag, omega_plus=hi.imag,
                          gamma_minus=lo.real, gamma_plus=hi.real)


STABLE, BISTABLE, SELF_OSCILLATING = "stable", "bistable", "self_oscillating"


def bistability_threshold(n):
    """|G|^2 above which a red-detuned node is bistable."""
    p = n.base
    d = n.delta_c_eff
    if d <= 0:
        return 0.0
    return (p.kappa ** 2 + d ** 2) * p.omega_r / (4.0 * d)


def stability_check(n):
    """Classify the operating point; also returns the eigenvalue verdict."""
    d = n.delta_c_eff
    eig_ok = is_stable(drift_matrix(n))
    if d < 0:
        label = SELF_OSCILLATING
    elif d == 0:
        label = BISTABLE if abs(n.G) > 0 else STABLE
    elif abs(n.G) ** 2 > bistability_threshold(n):
        label = BISTABLE
    else:
        label = STABLE
    return label, eig_ok
