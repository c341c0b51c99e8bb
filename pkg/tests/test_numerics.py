import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from omtnet import numerics, om_node
from omtnet.errors import BracketError, InstabilityError, SingularMatrixError

# roots of det(M - x) at kappa = 0.05, G = 3 kappa/2, zeta = 1, gamma_m = 0
# (sympy characteristic polynomial + mpmath polyroots, 30 digits)
CHARPOLY_ROOTS = np.array([0.025 - 1.0680806880743184j, 0.025 - 0.92625787109351492j,
                           0.025 + 0.92625787109351492j, 0.025 + 1.0680806880743184j])


def _rand_complex(rng, n):
    return rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))


def test_inverse_identity_and_diagonal():
    assert np.allclose(numerics.inverse(np.eye(4)), np.eye(4), atol=0)
    out = numerics.inverse(np.diag([2.0, 4j]))
    assert np.allclose(out, np.diag([0.5, -0.25j]), rtol=1e-15, atol=0)


def test_inverse_random_residual(rng):
    m = _rand_complex(rng, 6) + 6 * np.eye(6)
    inv = numerics.inverse(m)
    assert np.linalg.norm(m @ inv - np.eye(6)) < 1e-10


@given(n=st.integers(1, 12), seed=st.integers(0, 2 ** 31 - 1))
def test_inverse_residual_property(n, seed):
    rng = np.random.default_rng(seed)
    m = _rand_complex(rng, n) + (2 * n) * np.eye(n)
    inv = numerics.inverse(m)
    assert np.linalg.norm(m @ inv - np.eye(n), 2) <= 1e-10 * max(1.0, np.linalg.cond(m))


def test_inverse_singular_raises():
    with pytest.raises(SingularMatrixError):
        numerics.inverse(np.array([[1.0, 2.0], [2.0, 4.0]]))


def test_nonfinite_rejected():
    with pytest.raises(ValueError):
        numerics.as_cmatrix([[np.nan, 0], [0, 1]])


def test_eig_sorted_diag():
    ed = numerics.eig(np.diag([2j, 1j]))
    assert np.allclose(ed.eigenvalues, [1j, 2j])


def test_eig_rwa_block_splitting():
    kappa, G = 0.05, 0.075
    m = 1j * np.array([[1.0, G], [G, 1.0 - 1j * kappa]])
    ed = numerics.eig(m)
    root = np.sqrt(G ** 2 - kappa ** 2 / 4)
    expect = np.array([1j * (1 - root) + kappa / 2, 1j * (1 + root) + kappa / 2])
    assert np.allclose(ed.eigenvalues, expect, rtol=0, atol=1e-12)


def test_eig_against_charpoly_roots():
    n = om_node.node(delta_c=1.0, G=0.075, kappa_f=0.05, zeta=1)
    ed = numerics.eig(om_node.drift_matrix(n))
    assert np.allclose(ed.eigenvalues, CHARPOLY_ROOTS, rtol=0, atol=1e-13)
    m = om_node.drift_matrix(n)
    assert ed.residual(m).max() <= 1e-9 * np.linalg.norm(m)


@given(seed=st.integers(0, 2 ** 31 - 1), n=st.integers(2, 8))
def test_eig_reconstruction(seed, n):
    rng = np.random.default_rng(seed)
    m = _rand_complex(rng, n)
    ed = numerics.eig(m)
    v = ed.vectors
    rec = v @ np.diag(ed.eigenvalues) @ np.linalg.inv(v)
    assert np.linalg.norm(m - rec) <= 1e-8 * np.linalg.norm(m)
    assert np.all(ed.residual(m) <= 1e-9 * np.linalg.norm(m) * np.linalg.norm(v, axis=0))


def test_lyapunov_trivial():
    assert np.allclose(numerics.lyapunov_solve(np.eye(2), np.eye(2)), np.eye(2) / 2)
    c = numerics.lyapunov_solve(np.diag([1.0, 2.0]), np.diag([2.0, 8.0]))
    assert np.allclose(c, np.diag([1.0, 2.0]))


def test_lyapunov_unstable_raises():
    with pytest.raises(InstabilityError):
        numerics.lyapunov_solve(np.diag([1.0, -1.0]), np.eye(2))


@given(seed=st.integers(0, 2 ** 31 - 1), n=st.integers(2, 6))
def test_lyapunov_residual(seed, n):
    rng = np.random.default_rng(seed)
    a = _rand_complex(rng, n)
    m = a + (np.abs(np.linalg.eigvals(a)).max() + 1.0) * np.eye(n)
    b = _rand_complex(rng, n)
    d = b @ b.conj().T
    c = numerics.lyapunov_solve(m, d)
    assert np.linalg.norm(m @ c + c @ m.conj().T - d) <= 1e-10 * np.linalg.norm(d) * n


def test_lyapunov_defective_drift():
    # Jordan block: eigenvector solvers break, Schur does not
    m = np.array([[1.0, 1.0], [0.0, 1.0]], dtype=complex)
    c = numerics.lyapunov_solve(m, np.eye(2))
    assert np.allclose(m @ c + c @ m.conj().T, np.eye(2), atol=1e-13)


def test_quad_lorentzian_and_zero():
    g = 0.3
    val = numerics.quad_spectrum(lambda w: g / math.pi / (w * w + g * g), 100.0, points=[0.0])
    assert abs(val - 1.0) < 1e-8
    assert numerics.quad_spectrum(lambda w: 0.0 * w, 10.0) == 0


def test_root_bisect_sqrt2():
    x = numerics.root_bisect(lambda x: x * x - 2, 1.0, 2.0, tol=1e-12)
    assert abs(x - math.sqrt(2)) < 1e-11
    with pytest.raises(BracketError):
        numerics.root_bisect(lambda x: x * x + 1, 0.0, 1.0, tol=1e-9)


def test_bisect_many():
    c = np.array([2.0, 3.0, 5.0])
    x = numerics.bisect_many(lambda x: x * x - c, np.zeros(3), np.full(3, 3.0), n_iter=60)
    assert np.allclose(x, np.sqrt(c), atol=1e-14)


def test_ode_rk4_exp_decay():
    t = np.linspace(0, 1, 1001)
    y = numerics.ode_rk4(lambda s, y: -y, np.array([1.0]), t)
    assert abs(y[-1, 0] - math.exp(-1)) < 1e-8


def test_ode_rk4_order_four():
    def err(n):
        t = np.linspace(0, 2, n + 1)
        y = numerics.ode_rk4(lambda s, y: np.array([y[1], -y[0] - 0.1 * y[1]]),
                             np.array([1.0, 0.0]), t)
        # exact underdamped oscillator
        w = math.sqrt(1 - 0.0025)
        ex = math.exp(-0.1) * (math.cos(w * 2) + 0.05 / w * math.sin(w * 2))
        return abs(y[-1, 0] - ex)
    e1, e2 = err(40), err(80)
    assert e1 / e2 >= 12.0


def test_rk4_linear_matches_expm():
    from scipy.linalg import expm
    rng = np.random.default_rng(7)
    L = _rand_complex(rng, 4) * 0.3 - np.eye(4)
    gens = np.repeat(L[None], 201, axis=0)
    y0 = rng.normal(size=4).astype(complex)
    ys = numerics.rk4_linear(gens, y0, 0.01)
    assert np.allclose(ys[-1], expm(2.0 * L) @ y0, atol=1e-9)
