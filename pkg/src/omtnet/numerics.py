"""Small dense complex linear algebra, quadrature and integration helpers.

Matrices are plain complex numpy arrays. Everything here is a pure
function of its inputs.
"""
from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg

from . import _kernels
from .errors import (BracketError, ConvergenceError, CutoffError,
                     InstabilityError, SingularMatrixError)


def as_cmatrix(m, name="matrix"):
    """Validate and return ``m`` as a 2-D complex array with finite entries."""
    a = np.asarray(m, dtype=np.complex128)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


@dataclass(frozen=True)
class EigenDecomposition:
    eigenvalues: np.ndarray
    vectors: np.ndarray  # right eigenvectors in columns

    def residual(self, m):
        m = np.asarray(m)
        return np.linalg.norm(m @ self.vectors - self.vectors * self.eigenvalues, axis=0)


def inverse(m):
    """Inverse of a square matrix; raises SingularMatrixError if ill-posed."""
    a = as_cmatrix(m)
    if a.shape[0] != a.shape[1]:
        raise ValueError("inverse needs a square matrix")
    try:
        inv = np.linalg.inv(a)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(str(exc)) from exc
    # an exactly singular pivot does not always raise; catch the blow-up
    if not np.all(np.isfinite(inv)):
        raise SingularMatrixError("inverse has non-finite entries")
    scale = np.linalg.norm(a, 1) * np.linalg.norm(inv, 1)
    if scale > 1e15:
        raise SingularMatrixError(f"condition number ~{scale:.2e}")
    return inv


def sort_eigen(vals, vecs=None):
    """Order by ascending imaginary part, ties by ascending real part."""
    order = np.lexsort((vals.real, vals.imag))
    if vecs is None:
        return vals[order]
    return vals[order], vecs[:, order]


def eig(m):
    a = as_cmatrix(m)
    if a.shape[0] != a.shape[1]:
        raise ValueError("eig needs a square matrix")
    try:
        vals, vecs = np.linalg.eig(a)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(str(exc)) from exc
    vals, vecs = sort_eigen(vals, vecs)
    return EigenDecomposition(vals, vecs)


def lyapunov_solve(m, d):
    """Solve m C + C m^H = d for a stable m (all Re eigenvalues > 0).

    Bartels-Stewart on the complex Schur form m = U T U^H; stays well
    conditioned when m is defective, e.g. for chains of identical nodes.
    """
    a = as_cmatrix(m, "drift")
    q = as_cmatrix(d, "noise")
    t, u = linalg.schur(a, output="complex")
    lam = np.diag(t)
    if np.any(lam.real <= 0.0):
        raise InstabilityError(
            f"drift has eigenvalue with Re <= 0: min Re = {lam.real.min():.3e}")
    f = u.conj().T @ q @ u
    n = a.shape[0]
    x = np.zeros((n, n), dtype=complex)
    eye = np.eye(n)
    for j in range(n - 1, -1, -1):
        rhs = f[:, j] - x[:, j + 1:] @ t[j, j + 1:].conj()
        x[:, j] = linalg.solve_triangular(t + np.conj(t[j, j]) * eye, rhs)
    return u @ x @ u.conj().T


def default_cutoff(omega_r, delta_c, g, kappa):
    return 10.0 * (omega_r + abs(delta_c) + abs(g) + kappa)


def _quad_real(f, lo, hi, epsabs):
    val, err = integrate.quad(f, lo, hi, epsabs=epsabs, epsrel=1e-11, limit=2000)
    return val, err


def quad_spectrum(f, cutoff, points=(), scale=1.0):
    """Integral of a complex spectrum f(w) over the real line.

    The core [-cutoff, cutoff] is split at ``points`` (pole frequencies);
    the two tails are added with infinite-range quadrature after checking
    that f already decays like 1/w^2 at the cutoff.
    """
    cutoff = float(cutoff)
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    f_hi, f_lo = abs(f(cutoff)), abs(f(-cutoff))
    f_hi2, f_lo2 = abs(f(2 * cutoff)), abs(f(-2 * cutoff))
    # 1/w^2 decay means f(2W) ~ f(W)/4; allow some slack for subleading terms
    tail_ok = (f_hi2 <= 0.5 * f_hi + 1e-300) and (f_lo2 <= 0.5 * f_lo + 1e-300)
    tail_est = (f_hi + f_lo) * cutoff
    eps = 1e-9 * scale
    if not tail_ok and tail_est > eps:
        raise CutoffError(f"integrand not in its 1/w^2 tail at cutoff {cutoff:g}")
    brk = sorted({-cutoff, cutoff, *[float(p) for p in points if abs(p) < cutoff]})
    total = 0j
    err_tot = 0.0
    pieces = [(brk[i], brk[i + 1]) for i in range(len(brk) - 1)]
    pieces += [(-np.inf, -cutoff), (cutoff, np.inf)]
    for lo, hi in pieces:
        re, e1 = _quad_real(lambda w: f(w).real, lo, hi, eps / 10)
        im, e2 = _quad_real(lambda w: f(w).imag, lo, hi, eps / 10)
        total += re + 1j * im
        err_tot += e1 + e2
    if err_tot > max(eps, 1e-9 * abs(total)) * 10:
        raise ConvergenceError(f"quadrature error estimate {err_tot:.2e} too large")
    return total


def ode_rk4(rhs, y0, t_grid):
    """Classical fixed-step RK4 on the given grid; returns y at every node."""
    t = np.asarray(t_grid, dtype=float)
    y = np.asarray(y0)
    out = np.empty((t.size,) + y.shape, dtype=np.result_type(y, float))
    out[0] = y
    for k in range(t.size - 1):
        h = t[k + 1] - t[k]
        tk = t[k]
        k1 = rhs(tk, y)
        k2 = rhs(tk + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(tk + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(tk + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k + 1] = y
    return out


def rk4_linear(gens, y0, dt, backend=None):
    """RK4 for y' = L(t) y with L sampled on a uniform grid of spacing dt."""
    return _kernels.rk4_sampled(gens, y0, dt, backend=backend)


def root_bisect(g, lo, hi, tol, xtol=0.0, max_iter=200):
    """Bisection for a sign change of g on [lo, hi]."""
    glo, ghi = g(lo), g(hi)
    if glo == 0:
        return lo
    if ghi == 0:
        return hi
    if np.sign(glo) == np.sign(ghi):
        raise BracketError(f"g(lo)={glo:.3e} and g(hi)={ghi:.3e} share a sign")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if abs(gm) <= tol or (hi - lo) <= xtol:
            return mid
        if np.sign(gm) == np.sign(glo):
            lo, glo = mid, gm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def bisect_many(g, lo, hi, n_iter=60):
    """Vectorised bisection: g maps an array of x to an array of values.

    ``lo`` and ``hi`` are arrays bracketing one sign change each; the
    returned midpoints are accurate to (hi - lo) / 2**n_iter.
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    glo = g(lo)
    ghi = g(hi)
    if np.any(np.sign(glo) * np.sign(ghi) > 0):
        raise BracketError("some brackets do not contain a sign change")
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        left = np.sign(gm) == np.sign(glo)
        lo = np.where(left, mid, lo)
        glo = np.where(left, gm, glo)
        hi = np.where(left, hi, mid)
    return 0.5 * (lo + hi)
