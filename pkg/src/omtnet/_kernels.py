"""Hot loops: fixed-step RK4 propagation of linear (Liouvillian) dynamics.

Two implementations live side by side. The numba versions are used unless
``OMTNET_BACKEND=numpy`` is set in the environment (or numba is missing),
in which case the pure numpy versions are used. Both must agree to
round-off; ``tests/test_kernels.py`` checks that.
"""
import os

import numpy as np

JIT_OPTIONS = {"nogil": True, "cache": True}

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None


def _want_numba():
    flag = os.environ.get("OMTNET_BACKEND", "numba").strip().lower()
    return numba is not None and flag != "numpy"


BACKEND = "numba" if _want_numba() else "numpy"


# ---------------------------------------------------------------------------
# y' = L(t) y with L sampled on a uniform grid (linear interpolation)
# ---------------------------------------------------------------------------

def _rk4_sampled_numpy(gens, y0, dt):
    n_t = gens.shape[0]
    out = np.empty((n_t,) + y0.shape, dtype=np.complex128)
    y = y0.astype(np.complex128).copy()
    out[0] = y
    for k in range(n_t - 1):
        l0 = gens[k]
        l1 = gens[k + 1]
        lm = 0.5 * (l0 + l1)
        k1 = l0 @ y
        k2 = lm @ (y + 0.5 * dt * k1)
        k3 = lm @ (y + 0.5 * dt * k2)
        k4 = l1 @ (y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[k + 1] = y
    return out


def _matmul_into(a, b, out):
    d, m = b.shape
    for i in range(d):
        for j in range(m):
            acc = 0j
            for k in range(d):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc


def _rk4_sampled_impl(gens, y0, dt):
    n_t = gens.shape[0]
    d, m = y0.shape
    out = np.empty((n_t, d, m), dtype=np.complex128)
    y = y0.copy()
    out[0] = y
    lm = np.empty((d, d), dtype=np.complex128)
    k1 = np.empty((d, m), dtype=np.complex128)
    k2 = np.empty((d, m), dtype=np.complex128)
    k3 = np.empty((d, m), dtype=np.complex128)
    k4 = np.empty((d, m), dtype=np.complex128)
    tmp = np.empty((d, m), dtype=np.complex128)
    for k in range(n_t - 1):
        l0 = gens[k]
        l1 = gens[k + 1]
        for i in range(d):
            for j in range(d):
                lm[i, j] = 0.5 * (l0[i, j] + l1[i, j])
        _matmul_into(l0, y, k1)
        for i in range(d):
            for j in range(m):
                tmp[i, j] = y[i, j] + 0.5 * dt * k1[i, j]
        _matmul_into(lm, tmp, k2)
        for i in range(d):
            for j in range(m):
                tmp[i, j] = y[i, j] + 0.5 * dt * k2[i, j]
        _matmul_into(lm, tmp, k3)
        for i in range(d):
            for j in range(m):
                tmp[i, j] = y[i, j] + dt * k3[i, j]
        _matmul_into(l1, tmp, k4)
        for i in range(d):
            for j in range(m):
                y[i, j] += (dt / 6.0) * (k1[i, j] + 2.0 * k2[i, j]
                                         + 2.0 * k3[i, j] + k4[i, j])
        out[k + 1] = y
    return out


# ---------------------------------------------------------------------------
# Lindblad equation in matrix form with sparse (COO) operators
#   rho' = -i Heff rho + i rho Heff^+ + sum_k L_k rho L_k^+
# ---------------------------------------------------------------------------

def _lindblad_rhs_impl(h_r, h_c, h_v, j_ptr, j_r, j_c, j_v, rho, out):
    d = rho.shape[0]
    for a in range(d):
        for b in range(d):
            out[a, b] = 0j
    for n in range(h_v.shape[0]):
        r = h_r[n]
        c = h_c[n]
        v = h_v[n]
        mv = -1j * v
        pv = 1j * np.conj(v)
        for b in range(d):
            out[r, b] += mv * rho[c, b]
        for a in range(d):
            out[a, r] += pv * rho[a, c]
    for k in range(j_ptr.shape[0] - 1):
        for p in range(j_ptr[k], j_ptr[k + 1]):
            a = j_r[p]
            kk = j_c[p]
            va = j_v[p]
            for q in range(j_ptr[k], j_ptr[k + 1]):
                b = j_r[q]
                ll = j_c[q]
                out[a, b] += va * rho[kk, ll] * np.conj(j_v[q])


def _lindblad_rk4_impl(h_r, h_c, h_v, j_ptr, j_r, j_c, j_v, rho0, dt,
                       n_steps, stride):
    d = rho0.shape[0]
    n_out = n_steps // stride + 1
    snaps = np.empty((n_out, d, d), dtype=np.complex128)
    rho = rho0.copy()
    snaps[0] = rho
    k1 = np.empty((d, d), dtype=np.complex128)
    k2 = np.empty((d, d), dtype=np.complex128)
    k3 = np.empty((d, d), dtype=np.complex128)
    k4 = np.empty((d, d), dtype=np.complex128)
    tmp = np.empty((d, d), dtype=np.complex128)
    idx = 1
    for s in range(1, n_steps + 1):
        _lindblad_rhs(h_r, h_c, h_v, j_ptr, j_r, j_c, j_v, rho, k1)
        for a in range(d):
            for b in range(d):
                tmp[a, b] = rho[a, b] + 0.5 * dt * k1[a, b]
        _lindblad_rhs(h_r, h_c, h_v, j_ptr, j_r, j_c, j_v, tmp, k2)
        for a in range(d):
            for b in range(d):
                tmp[a, b] = rho[a, b] + 0.5 * dt * k2[a, b]
        _lindblad_rhs(h_r, h_c, h_v, j_ptr, j_r, j_c, j_v, tmp, k3)
        for a in range(d):
            for b in range(d):
                tmp[a, b] = rho[a, b] + dt * k3[a, b]
        _lindblad_rhs(h_r, h_c, h_v, j_ptr, j_r, j_c, j_v, tmp, k4)
        for a in range(d):
            for b in range(d):
                rho[a, b] += (dt / 6.0) * (k1[a, b] + 2.0 * k2[a, b]
                                           + 2.0 * k3[a, b] + k4[a, b])
        if s % stride == 0:
            snaps[idx] = rho
            idx += 1
    return snaps


def _lindblad_rk4_numpy(h_r, h_c, h_v, j_ptr, j_r, j_c, j_v, rho0, dt,
                        n_steps, stride):
    from scipy import sparse

    d = rho0.shape[0]
    heff = sparse.csr_matrix((h_v, (h_r, h_c)), shape=(d, d))
    heff_dag = heff.conj().T.tocsr()
    jumps = []
    for k in range(len(j_ptr) - 1):
        sl = slice(j_ptr[k], j_ptr[k + 1])
        jumps.append(sparse.csr_matrix((j_v[sl], (j_r[sl], j_c[sl])),
                                       shape=(d, d)))

    def rhs(rho):
        out = -1j * (heff @ rho) + 1j * (heff_dag.T @ rho.T).T
        for op in jumps:
            m1 = op @ rho
            out += (op @ m1.conj().T).conj().T
        return out

    n_out = n_steps // stride + 1
    snaps = np.empty((n_out, d, d), dtype=np.complex128)
    rho = rho0.astype(np.complex128).copy()
    snaps[0] = rho
    idx = 1
    for s in range(1, n_steps + 1):
        k1 = rhs(rho)
        k2 = rhs(rho + 0.5 * dt * k1)
        k3 = rhs(rho + 0.5 * dt * k2)
        k4 = rhs(rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if s % stride == 0:
            snaps[idx] = rho
            idx += 1
    return snaps


if numba is not None:
    _matmul_into = numba.njit(**JIT_OPTIONS)(_matmul_into)
    _rk4_sampled_numba = numba.njit(**JIT_OPTIONS)(_rk4_sampled_impl)
    _lindblad_rhs = numba.njit(**JIT_OPTIONS)(_lindblad_rhs_impl)
    _lindblad_rk4_numba = numba.njit(**JIT_OPTIONS)(_lindblad_rk4_impl)
else:  # pragma: no cover
    _lindblad_rhs = _lindblad_rhs_impl
    _rk4_sampled_numba = None
    _lindblad_rk4_numba = None


def rk4_sampled(gens, y0, dt, backend=None):
    """Integrate y' = L(t) y over the sample grid of ``gens``.

    ``gens`` has shape (n_t, d, d), ``y0`` shape (d,) or (d, m). The
    generator at the RK4 midpoint is the mean of the two neighbouring
    samples. Returns the state at every sample, shape (n_t,) + y0.shape.
    """
    backend = backend or BACKEND
    gens = np.ascontiguousarray(gens, dtype=np.complex128)
    y = np.asarray(y0, dtype=np.complex128)
    vec = y.ndim == 1
    if vec:
        y = y[:, None]
    y = np.ascontiguousarray(y)
    if backend == "numba":
        out = _rk4_sampled_numba(gens, y, float(dt))
    else:
        out = _rk4_sampled_numpy(gens, y, float(dt))
    return out[:, :, 0] if vec else out


def lindblad_rk4(heff, jumps, rho0, dt, n_steps, stride=1, backend=None):
    """RK4 for a constant Lindblad generator given as sparse operators.

    ``heff`` is the non-Hermitian effective Hamiltonian
    H - (i/2) sum L^+ L and ``jumps`` the list of jump operators, all as
    scipy sparse matrices. Returns snapshots every ``stride`` steps.
    """
    backend = backend or BACKEND
    h = heff.tocoo()
    j_r, j_c, j_v, ptr = [], [], [], [0]
    for op in jumps:
        c = op.tocoo()
        j_r.append(c.row)
        j_c.append(c.col)
        j_v.append(c.data)
        ptr.append(ptr[-1] + c.nnz)
    args = (
        np.ascontiguousarray(h.row, dtype=np.int64),
        np.ascontiguousarray(h.col, dtype=np.int64),
        np.ascontiguousarray(h.data, dtype=np.complex128),
        np.asarray(ptr, dtype=np.int64),
        np.ascontiguousarray(np.concatenate(j_r) if j_r else [], dtype=np.int64),
        np.ascontiguousarray(np.concatenate(j_c) if j_c else [], dtype=np.int64),
        np.ascontiguousarray(np.concatenate(j_v) if j_v else [],
                             dtype=np.complex128),
        np.ascontiguousarray(rho0, dtype=np.complex128),
        float(dt), int(n_steps), int(stride),
    )
    if backend == "numba":
        return _lindblad_rk4_numba(*args)
    return _lindblad_rk4_numpy(*args)
