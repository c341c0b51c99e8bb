"""Effective qubit-to-fiber coefficients of one transducer node."""
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import numerics, om_node
from .errors import InstabilityError


@dataclass(frozen=True)
class QubitParams:
    omega_q: float
    lam: float
    t2: float = math.inf

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if not self.t2 > 0:
            raise ValueError("t2 must be positive (inf allowed)")

    @property
    def dephasing_rate(self):
        return 0.0 if math.isinf(self.t2) else 1.0 / self.t2


@dataclass(frozen=True)
class InterfaceCoefficients:
    gamma: float
    delta0: float
    eta: float
    phi: float
    n0: float


def adiabaticity_ratio(n, q):
    """lambda / max(gamma_op, min |omega_pm - omega_q|); should stay below 1."""
    modes = om_node.normal_modes(om_node.drift_matrix(n))
    det = min(abs(modes.omega_minus - q.omega_q), abs(modes.omega_plus - q.omega_q))
    return q.lam / max(modes.gamma_op, det)


def _stable_drift(n):
    m = om_node.drift_matrix(n)
    if not om_node.is_stable(m):
        raise InstabilityError("node drift matrix is unstable")
    return m


def effective_coefficients(n, q, warn=True):
    m = _stable_drift(n)
    a = om_node.response_matrix(m, q.omega_q)
    lam2 = q.lam ** 2
    gamma = 0.5 * lam2 * a[0, 0].real
    delta0 = 0.25 * lam2 * a[0, 0].imag
    phi = float(np.angle(1j * a[1, 0]))
    kappa = n.base.kappa
    eta = n.base.kappa_f / kappa if kappa > 0 else 0.0
    n0 = _occupation_from_response(n, a)
    if warn and q.lam > 0:
        ratio = adiabaticity_ratio(n, q)
        if ratio >= 1:
            warnings.warn(f"adiabaticity ratio {ratio:.2f} >= 1; elimination is "
                          "not controlled", RuntimeWarning, stacklevel=2)
    return InterfaceCoefficients(gamma=gamma, delta0=delta0, eta=eta, phi=phi, n0=n0)


def closed_form_rate(n, q):
    """Decay rate of the qubit in the rotating-wave, gamma_m -> 0 limit."""
    p = n.base
    g2 = abs(n.G) ** 2
    wq = q.omega_q
    den = (g2 + (n.delta_c_eff - wq) * (wq - p.omega_r)) ** 2 + \
        p.kappa ** 2 * (wq - p.omega_r) ** 2
    if g2 == 0:
        return 0.0
    return q.lam ** 2 * g2 * 0.5 * p.kappa / den


def _occupation_from_response(n, a):
    # N0 = Y11 / (2 Re A11), Y = [A* r A^T]_11 with the full single-node noise
    r = om_node.noise_matrix(n.base, include_fiber=True)
    y = (a.conj() @ r @ a.T)[0, 0].real
    re = a[0, 0].real
    if re <= 0:
        return 0.0 if y == 0 else math.inf
    return y / (2.0 * re)


def bath_occupation(n, q, route="numeric"):
    """Effective occupation of the bath seen by the qubit.

    ``route='numeric'`` uses the spectrum of the eliminated noise at the
    qubit frequency; ``route='closed'`` is the leading-order estimate in
    the gamma_m -> 0 limit.
    """
    if route == "numeric":
        m = _stable_drift(n)
        return _occupation_from_response(n, om_node.response_matrix(m, q.omega_q))
    if route == "closed":
        p = n.base
        g2 = abs(n.G) ** 2
        num = p.kappa ** 2 + (n.delta_c_eff - q.omega_q) ** 2
        thermal = p.thermal_rate / (2 * p.kappa) * num / g2 if g2 > 0 else math.inf
        stokes = num / (4 * n.delta_c_eff * q.omega_q) if p.zeta else 0.0
        return thermal + stokes
    raise ValueError(f"unknown route {route!r}")


def steady_moments(n):
    """<v_k^+ v_l> of the free node, from the Lyapunov equation."""
    m = _stable_drift(n)
    r = om_node.noise_matrix(n.base, include_fiber=True)
    return numerics.lyapunov_solve(m.conj(), r)


def cavity_occupation(n):
    return float(steady_moments(n)[1, 1].real)


def excess_photons(n, duration):
    """Photons emitted into the fiber by the free node during ``duration``."""
    return 2.0 * n.base.kappa_f * duration * cavity_occupation(n)


def excess_photons_estimate(n, gamma):
    """Leading-order estimate of the excess photons for a window 1/gamma."""
    p = n.base
    return p.thermal_rate / gamma + (p.kappa / gamma) * abs(n.G) ** 2 / p.omega_r ** 2


def thermal_shift(n, q):
    """Frequency shift from the thermal part of the eliminated correlations."""
    m = _stable_drift(n)
    a = om_node.response_matrix(m, q.omega_q)
    w = steady_moments(n)
    t11 = np.sum(a[0, :].conj() * w[:, 0])
    return -0.5 * q.lam ** 2 * t11.imag


# --- tuning paths ---------------------------------------------------------

def vary_g_geometry(omega_r, kappa, g_res=None):
    """Bare detuning and qubit frequency of the coupling-tuning path.

    The effective detuning equals omega_r at the resonant coupling
    g_res = 3 kappa / 2, where the lower normal mode meets the qubit.
    """
    g_res = 1.5 * kappa if g_res is None else g_res
    delta_bare = omega_r + 2.0 * g_res ** 2 / omega_r
    return delta_bare, omega_r - g_res, g_res


def node_on_g_path(base, G, delta_bare):
    return om_node.LinearizedNode(base=base, G=complex(G),
                                  delta_c_eff=delta_bare - 2.0 * G ** 2 / base.omega_r)


def constant_power_coupling(delta_c, power, omega_r, kappa, branch="unique"):
    """|G|^2 at bare detuning delta_c for fixed g0^2 |E|^2 = ``power``.

    Solves x (kappa^2 + (delta_c - 2x/omega_r)^2) = power for x = |G|^2.
    branch='lowest' returns the low-amplitude solution, the one reached
    by sweeping in from large detuning; 'unique' refuses multistability.
    """
    a = 2.0 / omega_r
    roots = np.roots([a * a, -2 * delta_c * a, kappa ** 2 + delta_c ** 2, -power])
    real = sorted(r.real for r in roots if abs(r.imag) <= 1e-9 * max(abs(r), 1e-30)
                  and r.real > 0)
    if branch == "lowest" and real:
        return real[0]
    if len(real) != 1:
        from .errors import MultistableError
        raise MultistableError(f"{len(real)} steady states at delta_c={delta_c:g}")
    return real[0]


def lowest_power_coupling(delta_c, power, omega_r, kappa, n_iter=80):
    """Vectorised low-amplitude root of the constant-power cubic.

    f(x) = x (kappa^2 + (delta_c - a x)^2) - power with a = 2/omega_r
    rises from -power at x = 0; the lowest root sits below the first
    local maximum of f when that maximum is positive, else above the
    local minimum.
    """
    d = np.atleast_1d(np.asarray(delta_c, dtype=float))
    a = 2.0 / omega_r
    k2 = kappa * kappa

    def f(x):
        return x * (k2 + (d - a * x) ** 2) - power

    disc = 16 * a * a * d * d - 12 * a * a * (k2 + d * d)
    root = np.sqrt(np.maximum(disc, 0.0))
    x1 = (4 * a * d - root) / (6 * a * a)
    x2 = (4 * a * d + root) / (6 * a * a)
    if k2 <= 0:
        raise ValueError("kappa must be positive")
    lo = np.zeros_like(d)
    hi = np.full_like(d, power / k2)
    folded = disc > 0
    first = folded & (f(np.where(folded, x1, 0.0)) >= 0)
    hi = np.where(first, x1, hi)
    later = folded & ~first
    lo = np.where(later, x2, lo)
    x = numerics.bisect_many(f, lo, hi, n_iter=n_iter)
    return x if np.ndim(delta_c) else float(x[0])


def vary_dc_power(omega_r, kappa, g_res=None):
    g_res = 1.5 * kappa if g_res is None else g_res
    return g_res ** 2 * (kappa ** 2 + omega_r ** 2)


def node_on_dc_path(base, delta_bare, power):
    x = constant_power_coupling(delta_bare, power, base.omega_r, base.kappa,
                                branch="lowest")
    return om_node.LinearizedNode(base=base, G=complex(math.sqrt(x)),
                                  delta_c_eff=delta_bare - 2.0 * x / base.omega_r)


def tuning_path(base, q, control, grid, g_res=None):
    """Gamma along one of the two standard tuning paths.

    vary_G: grid holds G values; the bare detuning is fixed so that the
    effective detuning is omega_r at g_res. vary_dc: grid holds bare
    detunings at constant laser power; G follows from the steady state.
    """
    out = []
    if control == "vary_G":
        delta_bare, _, _ = vary_g_geometry(base.omega_r, base.kappa, g_res)
        for g in grid:
            n = node_on_g_path(base, g, delta_bare)
            out.append((float(g), effective_coefficients(n, q, warn=False).gamma))
    elif control == "vary_dc":
        power = vary_dc_power(base.omega_r, base.kappa, g_res)
        for d in grid:
            n = node_on_dc_path(base, d, power)
            out.append((float(d), effective_coefficients(n, q, warn=False).gamma))
    else:
        raise ValueError(f"unknown control {control!r}")
    return out
