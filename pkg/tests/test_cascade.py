import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from _helpers import moments_by_quadrature
from omtnet import cascade, interface, numerics, om_node, qubit_dynamics as qd
from omtnet.errors import PhysicsRegimeError

KAPPA = 0.05
LAM = 0.005


def _node(G=0.075, gm=0.0, nm=0.0, zeta=0, k0=0.0, dc=1.0):
    return om_node.node(delta_c=dc, G=G, kappa_f=KAPPA - k0, kappa_0=k0, gamma_m=gm,
                        n_m=nm, zeta=zeta)


def _chain(nodes, wq=0.925, lam=LAM):
    return cascade.NodeChain(nodes, [interface.QubitParams(omega_q=wq, lam=lam)] * len(nodes))


def test_chain_validation():
    with pytest.raises(ValueError):
        cascade.NodeChain([_node()], [])
    with pytest.raises(ValueError):
        cascade.NodeChain([], [])


def test_fiber_bypasses_decoupled_cavity():
    n = om_node.node(delta_c=1.0, G=0.075, kappa_f=0.0, kappa_0=KAPPA)
    assert np.array_equal(cascade.single_node_transfer(n, 0.93), cascade.P)


def test_empty_mechanics_all_pass():
    n = _node(G=0.0, gm=1e-4)
    for w in (0.5, 0.97, 1.4):
        assert abs(abs(cascade.transmission(n, w)) - 1.0) < 1e-8


@pytest.mark.parametrize("k0", [1e-4, 1e-3, 2.5e-3])
def test_transmission_loss_bound(k0):
    n = _node(k0=k0)
    t = cascade.transmission(n, 0.925)
    kf = KAPPA - k0
    assert 1 - abs(t) <= 2 * k0 / kf + 1e-3


def test_response_definitions():
    chain = _chain([_node(), _node(G=0.05)])
    a1 = om_node.response_matrix(om_node.drift_matrix(chain.nodes[0]), 0.93)
    assert np.array_equal(cascade.multinode_response(chain, 1, 1, 0.93), a1)
    with pytest.raises(IndexError):
        cascade.multinode_response(chain, 1, 2, 0.93)
    # T^{21} by hand
    a2 = om_node.response_matrix(om_node.drift_matrix(chain.nodes[1]), 0.93)
    ref = -2 * KAPPA * a2 @ cascade.P @ a1
    assert np.allclose(cascade.multinode_response(chain, 2, 1, 0.93), ref, rtol=1e-14)
    ref0 = -np.sqrt(2 * KAPPA) * a2 @ cascade.single_node_transfer(chain.nodes[0], 0.93)
    assert np.allclose(cascade.multinode_response(chain, 2, 0, 0.93), ref0, rtol=1e-14)


def test_ideal_two_node_structure():
    co = cascade.me_coefficients(_chain([_node(), _node()]))
    g = co.gamma
    assert g == pytest.approx([LAM ** 2 / (2 * KAPPA)] * 2, rel=1e-10)
    assert abs(abs(co.J[1, 0]) - np.sqrt(g[0] * g[1])) <= 1e-8 * np.sqrt(g[0] * g[1])
    assert co.J[0, 1] == 0
    assert np.all(np.abs(co.n_occ) <= 1e-10)
    assert np.all(np.abs(co.D) <= 1e-10)


def test_single_node_chain_reduces_to_interface():
    n = _node(gm=1e-4, nm=100, zeta=1)
    q = interface.QubitParams(omega_q=0.925, lam=LAM)
    co = cascade.me_coefficients(cascade.NodeChain([n], [q]))
    e = interface.effective_coefficients(n, q)
    assert co.gamma[0] == pytest.approx(e.gamma, rel=1e-12)
    assert co.delta0[0] == pytest.approx(e.delta0, rel=1e-12)
    assert co.n_occ[0] == pytest.approx(e.n0, rel=1e-10)
    assert co.delta_th[0] == pytest.approx(interface.thermal_shift(n, q), rel=1e-8)


def test_lossy_chain_factorises():
    n_lossy = _node(k0=0.005)
    chain = _chain([_node(), n_lossy, _node()])
    co = cascade.me_coefficients(chain)
    # direct evaluation from single-node quantities
    q = chain.qubits[0]
    g1 = interface.effective_coefficients(chain.nodes[0], q).gamma
    g3 = interface.effective_coefficients(chain.nodes[2], q).gamma
    t2 = abs(cascade.transmission(n_lossy, q.omega_q))
    ref = np.sqrt(g3) * t2 * np.sqrt(g1)
    assert abs(abs(co.J[2, 0]) - ref) <= 1e-8 * ref
    assert t2 < 1


@given(k0=st.floats(0.0, 0.01), G=st.floats(0.03, 0.1), wq=st.floats(0.9, 1.0))
def test_coupling_decays_through_chain(k0, G, wq):
    nodes = [_node(G=G, k0=k0)] * 3
    co = cascade.me_coefficients(_chain(nodes, wq=wq), include_thermal_shift=False)
    t = abs(cascade.transmission(nodes[1], wq))
    # only the fiber-coupled share eta = kappa_f/kappa of each rate feeds the chain
    g = co.gamma * (KAPPA - k0) / KAPPA
    assert abs(co.J[2, 0]) == pytest.approx(np.sqrt(g[2] * g[0]) * t, rel=1e-8)
    assert abs(co.J[1, 0]) == pytest.approx(np.sqrt(g[1] * g[0]), rel=1e-8)


@given(gm=st.floats(0.0, 1e-3), nm=st.floats(0, 500), zeta=st.sampled_from([0, 1]),
       k0=st.floats(0.0, 0.01))
def test_unidirectional_and_hermitian(gm, nm, zeta, k0):
    chain = _chain([_node(gm=gm + 1e-6, nm=nm, zeta=zeta, k0=k0)] * 3)
    co = cascade.me_coefficients(chain, include_thermal_shift=False)
    assert np.all(co.J[np.triu_indices(3)] == 0)
    assert np.allclose(co.D, co.D.conj().T, rtol=0, atol=1e-12 * max(np.abs(co.D).max(), 1e-30))
    assert np.all(co.n_occ >= 0)
    for i in (1, 2, 3):
        for j in (1, 2, 3):
            y_ij = cascade.spectral_correlation(chain, i, j, 0.925)
            y_ji = cascade.spectral_correlation(chain, j, i, 0.925)
            assert abs(y_ij[0, 0] - y_ji[0, 0].conj()) <= 1e-12 * max(abs(y_ij[0, 0]), 1e-30)


def test_thermal_cascaded_occupation_closed_form():
    gm, nm = 1e-4, 100.0
    n = _node(gm=gm, nm=nm)
    chain = _chain([n, n])
    a = om_node.response_matrix(om_node.drift_matrix(n), 0.925)
    n0, nc2 = cascade.cascaded_occupation(chain, 2)
    assert nc2 == pytest.approx(2 * KAPPA * abs(a[1, 0]) ** 2 * gm * nm, rel=1e-10)
    assert cascade.cascaded_occupation(chain, 1)[1] == 0.0


def test_occupation_grows_linearly_with_index():
    n = _node(gm=1e-4, nm=100.0)
    co = cascade.me_coefficients(_chain([n] * 4))
    steps = np.diff(co.n_occ)
    assert np.all(steps > 0)
    assert steps.max() / steps.min() < 1.02


@pytest.mark.parametrize("G,strong", [(KAPPA / 4, False), (KAPPA, True)])
def test_cascaded_occupation_estimate(G, strong):
    n = om_node.node(delta_c=1.0, G=G, kappa_f=KAPPA, gamma_m=1e-4, n_m=100, zeta=1)
    nm = om_node.normal_modes(om_node.drift_matrix(n))
    wq = nm.omega_minus if strong else 1.0
    _, nc = cascade.cascaded_occupation(_chain([n, n], wq=wq), 2)
    assert nc == pytest.approx(cascade.cascaded_occupation_estimate(n, nm.gamma_op), rel=0.15)


def test_thermal_jump_operators_reassemble_noise():
    th = 1e-2
    n = _node(gm=1e-4, nm=100.0)
    chain = _chain([n] * 3)
    co = cascade.me_coefficients(chain)
    ops = cascade.thermal_jump_operators(chain)
    assert [k for k, _ in ops] == [1, 2, 3]
    last = ops[-1][1]
    assert last[0] == 0 and last[1] == 0 and last[2] != 0
    x = np.array([v for _, v in ops])
    assert np.allclose(co.gamma * co.n_occ, th * (np.abs(x) ** 2).sum(0), rtol=1e-8, atol=0)
    d = th * np.einsum("ni,nj->ij", x, x.conj())
    off = ~np.eye(3, dtype=bool)
    assert np.allclose(co.D[off], d[off], rtol=1e-8, atol=0)


def test_thermal_jump_magnitude_on_resonance():
    n = _node(gm=1e-4, nm=100.0)
    chain = _chain([n, n])
    co = cascade.me_coefficients(chain)
    gop = om_node.normal_modes(om_node.drift_matrix(n)).gamma_op
    a11 = om_node.response_matrix(om_node.drift_matrix(n), 0.925)[0, 0]
    for k, vec in cascade.thermal_jump_operators(chain):
        xi = abs(vec[k - 1])
        assert xi ** 2 == pytest.approx(co.gamma[k - 1] * abs(a11) ** 2 / (2 * a11.real),
                                        rel=1e-10)
        # order-of-magnitude relation only: the exact ratio is gamma_op |A11|^2 / 2 Re A11
        assert 0.5 < xi / np.sqrt(co.gamma[k - 1] / gop) < 2.0


def test_thermal_jump_regime_error():
    with pytest.raises(PhysicsRegimeError):
        cascade.thermal_jump_operators(_chain([_node(zeta=1)] * 2))
    with pytest.raises(PhysicsRegimeError):
        cascade.thermal_jump_operators(_chain([_node(k0=0.01)] * 2))


def test_joint_moments_two_routes():
    chain = _chain([_node(gm=2e-4, nm=50, zeta=1, k0=0.005)] * 2)
    m = cascade.joint_drift(chain)
    r = cascade.joint_noise(chain)
    lyap = cascade.joint_moments(chain)
    quad = moments_by_quadrature(m.conj(), r.conj()).conj()
    assert np.abs(lyap - quad).max() <= 1e-6 * np.abs(lyap).max()


def test_cascaded_generator_keeps_states_physical(rng):
    chain = _chain([_node(gm=1e-4, nm=100, zeta=1, k0=0.002)] * 3)
    co = cascade.me_coefficients(chain)
    pc = qd.PairwiseCoefficients(gamma=co.gamma, delta=co.delta, n_occ=co.n_occ,
                                 J=co.J, D=co.D)
    L = qd.build_generator(pc)
    g = co.gamma.max()
    dt = 1 / (60 * qd.max_rate(L[None]))
    n_t = int(3 / g / dt)
    for _ in range(3):
        psi = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
        rho = psi @ psi.conj().T
        rho /= np.trace(rho)
        traj = qd.evolve(rho, np.repeat(L[None], 2, axis=0), dt)
        # advance with the exact propagator instead of a long RK4 run
        from scipy.linalg import expm
        prop = expm(L * 3 / g)
        out = qd.unvec(prop @ qd.vec(rho))
        assert abs(np.trace(out) - 1) < 1e-10
        assert np.allclose(out, out.conj().T, atol=1e-10)
        assert np.linalg.eigvalsh(0.5 * (out + out.conj().T)).min() >= -1e-8
        assert traj.shape == (2, 8, 8)


def test_drive_back_solve_round_trip():
    # delta_c < sqrt(3) kappa keeps every node monostable
    ps = [om_node.OMNodeParams(omega_r=1.0, delta_c=0.5 + 0.1 * i, g0=1e-4, kappa_f=0.4,
                               kappa_0=0.1) for i in range(3)]
    alphas = [300.0, 250j, 400.0 - 100j]
    drives = cascade.back_solve_drives(ps, alphas)
    eff = cascade.effective_drives(ps, drives, alphas)
    for p, e, a in zip(ps, eff, alphas):
        ss = om_node.classical_steady_state(p, e)
        assert ss.alpha == pytest.approx(a, rel=1e-9)
