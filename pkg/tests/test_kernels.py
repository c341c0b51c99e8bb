import os
import subprocess
import sys

import numpy as np
import pytest
from scipy import sparse
from scipy.linalg import expm

from omtnet import _kernels

numba = pytest.importorskip("numba")


def _random_generators(rng, n_t=40, d=6):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    b = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    s = np.linspace(0, 1, n_t)[:, None, None]
    return 0.3 * (a + s * b) - 1.5 * np.eye(d)


def test_rk4_sampled_backends_agree(rng):
    gens = _random_generators(rng)
    y0 = rng.normal(size=(6, 3)) + 0j
    a = _kernels.rk4_sampled(gens, y0, 0.01, backend="numba")
    b = _kernels.rk4_sampled(gens, y0, 0.01, backend="numpy")
    assert np.abs(a - b).max() < 1e-12
    v = _kernels.rk4_sampled(gens, y0[:, 0], 0.01, backend="numpy")
    assert np.allclose(v, b[:, :, 0], rtol=0, atol=1e-15)


def _qubit_problem():
    h = sparse.csr_matrix(np.array([[0.5, 0.2], [0.2, -0.5]], dtype=complex))
    lo = sparse.csr_matrix(np.sqrt(0.3) * np.array([[0, 1], [0, 0]], dtype=complex))
    heff = h - 0.5j * (lo.getH() @ lo)
    return h, lo, heff


def test_lindblad_backends_agree_and_match_expm():
    h, lo, heff = _qubit_problem()
    rho0 = np.array([[0, 0], [0, 1]], dtype=complex)
    a = _kernels.lindblad_rk4(heff, [lo], rho0, 0.01, 500, 50, backend="numba")
    b = _kernels.lindblad_rk4(heff, [lo], rho0, 0.01, 500, 50, backend="numpy")
    assert a.shape == b.shape == (11, 2, 2)
    assert np.abs(a - b).max() < 1e-13
    # column-stacked Liouvillian as an independent reference
    e = np.eye(2)
    hd, ld = h.toarray(), lo.toarray()
    ldl = ld.conj().T @ ld
    liou = (-1j * (np.kron(e, hd) - np.kron(hd.T, e)) + np.kron(ld.conj(), ld)
            - 0.5 * np.kron(e, ldl) - 0.5 * np.kron(ldl.T, e))
    ref = (expm(liou * 5.0) @ rho0.reshape(-1, order="F")).reshape(2, 2, order="F")
    assert np.abs(b[-1] - ref).max() < 1e-9


def test_no_jumps():
    h, _, _ = _qubit_problem()
    rho0 = np.eye(2, dtype=complex) / 2
    for be in ("numba", "numpy"):
        out = _kernels.lindblad_rk4(h, [], rho0, 0.01, 10, 10, backend=be)
        assert np.allclose(out[-1], rho0, atol=1e-14)


def test_env_var_selects_numpy():
    code = "from omtnet import _kernels; print(_kernels.BACKEND)"
    env = dict(os.environ, OMTNET_BACKEND="numpy")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                         text=True, check=True)
    assert out.stdout.strip() == "numpy"
