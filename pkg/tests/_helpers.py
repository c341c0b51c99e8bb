"""Shared independent routes used by several test modules."""
import math

import numpy as np
from scipy import integrate

from omtnet import numerics, om_node


def moments_by_quadrature(m, r):
    """Steady <v_k^+ v_l> as (1/2pi) int A*(w) R A^T(w) dw (scipy quad_vec)."""
    m = np.asarray(m, dtype=complex)
    d = m.shape[0]
    eye = np.eye(d)
    ev = np.linalg.eigvals(m)
    poles = sorted(-ev.imag)
    lo, hi = poles[0] - 2.0, poles[-1] + 2.0

    def spec(w):
        a = np.linalg.inv(m - 1j * w * eye)
        return a.conj() @ r @ a.T

    kw = dict(epsabs=1e-14, epsrel=1e-10, limit=2000)
    core = integrate.quad_vec(spec, lo, hi, points=poles, **kw)[0]
    tails = (integrate.quad_vec(spec, -np.inf, lo, **kw)[0]
             + integrate.quad_vec(spec, hi, np.inf, **kw)[0])
    return (core + tails) / (2 * math.pi)


def moment_entry_by_quad_spectrum(m, r, k, l):
    """Same integral for one entry through the package's own quadrature."""
    m = np.asarray(m, dtype=complex)
    ev = np.linalg.eigvals(m)
    eye = np.eye(m.shape[0])

    def f(w):
        a = np.linalg.inv(m - 1j * w * eye)
        return (a.conj() @ r @ a.T)[k, l]

    cutoff = 40.0 * (np.abs(ev).max() + 1.0)
    return numerics.quad_spectrum(f, cutoff, points=sorted(-ev.imag), scale=1e-3) / (2 * math.pi)


def cavity_thermal_quadrature(n):
    """(1/2pi) int gamma_m N_m |A_21(w)|^2 dw with scipy's adaptive quad."""
    m = om_node.drift_matrix(n)
    p = n.base

    def f(w):
        return p.gamma_m * p.n_m * abs(np.linalg.inv(m - 1j * w * np.eye(4))[1, 0]) ** 2

    ev = np.linalg.eigvals(m)
    pts = sorted(-ev.imag)
    lo, hi = min(pts) - 5, max(pts) + 5
    core = integrate.quad(f, lo, hi, points=pts, limit=400, epsabs=0, epsrel=1e-11)[0]
    tails = (integrate.quad(f, -np.inf, lo, epsabs=0, epsrel=1e-11)[0]
             + integrate.quad(f, hi, np.inf, epsabs=0, epsrel=1e-11)[0])
    return (core + tails) / (2 * math.pi)


def node_matrix():
    """Node configurations exercised by the Lyapunov and quadrature checks."""
    out = []
    for zeta in (0, 1):
        for G in (0.02, 0.075, 0.15):
            for dc in (0.9, 1.0, 1.1):
                for gm, nm, k0 in ((0.0, 0.0, 0.0), (1e-4, 100.0, 0.0), (2e-4, 50.0, 0.01)):
                    out.append(om_node.node(delta_c=dc, G=G, kappa_f=0.05, kappa_0=k0,
                                            gamma_m=gm, n_m=nm, zeta=zeta))
    return out
