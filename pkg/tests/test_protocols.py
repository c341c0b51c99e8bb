import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from omtnet import interface, om_node, protocols
from omtnet.errors import AdiabaticityError, BoundaryViolationError, UnreachableRateError

IDEAL = protocols.TransferConfig(kappa=0.05, lam=0.005)


@pytest.fixture(scope="module")
def ideal_design():
    return protocols.design(IDEAL)


@pytest.fixture(scope="module")
def ideal_fidelity(ideal_design):
    return protocols.simulate(IDEAL, ideal_design[1]).fidelity


@pytest.mark.parametrize("family,tp", [("exp_symmetric", 8.0), ("gauss", 12.0)])
def test_pulse_closed_forms(family, tp):
    shape = protocols.pulse_shape(protocols.PulseSpec(family=family, gamma_max=1.0, tp=tp))
    assert shape.leak < 1e-2
    assert shape.residual <= 1e-6
    assert np.all(shape.gamma1 > 0) and shape.gamma1.max() <= 1.0 + 1e-9
    # the true maximum may fall between grid nodes
    assert shape.gamma1.max() == pytest.approx(1.0, rel=1e-4)
    assert np.array_equal(shape.gamma2, shape.gamma1[::-1])


@pytest.mark.parametrize("family,tp", [("exp_symmetric", 8.0), ("gauss", 12.0)])
def test_pulse_matches_integrated_ode(family, tp):
    gm = 2.0
    shape = protocols.pulse_shape(protocols.PulseSpec(family=family, gamma_max=gm, tp=tp / gm))
    t = shape.t

    def rhs(s, y):
        return y * y + 2 * shape.f(np.array([s]))[0] * y

    kw = dict(method="DOP853", rtol=1e-12, atol=1e-14)
    if family == "exp_symmetric":
        left = t[t <= 0]
        sol = solve_ivp(rhs, (t[0], 0.0), [shape.gamma1[0]], t_eval=left, **kw)
        right = t[t > 0]
        # f jumps at t = 0; Gamma stays at Gamma_max afterwards
        y = np.concatenate([sol.y[0], np.full(right.size, sol.y[0][-1])])
    else:
        y = solve_ivp(rhs, (t[0], t[-1]), [shape.gamma1[0]], t_eval=t, **kw).y[0]
    assert np.abs(y - shape.gamma1).max() < 1e-6 * gm


def test_pulse_spec_validation():
    with pytest.raises(ValueError):
        protocols.PulseSpec(family="square")
    with pytest.raises(ValueError):
        protocols.PulseSpec(n_grid=800)
    with pytest.raises(BoundaryViolationError):
        protocols.pulse_shape(protocols.PulseSpec(family="gauss", gamma_max=1.0, tp=4.0))
    with pytest.raises(BoundaryViolationError):
        protocols.pulse_shape(protocols.PulseSpec(family="exp_symmetric", gamma_max=1.0,
                                                  tp=4.0))


def test_emitted_packet_time_symmetric():
    shape = protocols.pulse_shape(protocols.PulseSpec(family="gauss", gamma_max=1.0, tp=12.0))
    amp = protocols.dark_state_amplitudes(shape.t, shape.gamma1, shape.gamma2)
    a = np.abs(amp.a)
    assert np.abs(a - a[::-1]).max() <= 1e-6


def test_receiver_off_keeps_v2_zero():
    t = np.linspace(-5, 5, 501)
    amp = protocols.dark_state_amplitudes(t, np.full(t.size, 0.5), np.zeros(t.size))
    assert np.all(amp.v2 == 0)
    assert np.allclose(np.abs(amp.v1), np.exp(-0.25 * (t - t[0])), atol=1e-10)


def test_designed_pair_transfers_and_stays_dark():
    shape = protocols.pulse_shape(protocols.PulseSpec(family="gauss", gamma_max=1.0, tp=12.0))
    g1, g2 = shape.gamma1, shape.gamma2
    amp = protocols.dark_state_amplitudes(shape.t, g1, g2,
                                          v2_0=-math.sqrt(g1[0] / g2[0]))
    assert abs(amp.v2[-1]) >= 0.99
    assert amp.dark_residual.max() <= 1e-6
    plain = protocols.dark_state_amplitudes(shape.t, g1, g2)
    assert abs(plain.v2[-1]) >= 0.99
    detuned = protocols.dark_state_amplitudes(shape.t, g1, g2, delta=1.0)
    assert abs(detuned.v2[-1]) ** 2 < abs(plain.v2[-1]) ** 2
    weaker = protocols.dark_state_amplitudes(shape.t, g1, g2, delta=0.3)
    assert abs(detuned.v2[-1]) < abs(weaker.v2[-1]) < abs(plain.v2[-1])


def test_constant_peak_rate_gives_resonant_coupling():
    base = IDEAL.base
    geo = protocols.path_geometry(base, "vary_G")
    q = interface.QubitParams(omega_q=geo["omega_q"], lam=IDEAL.lam)
    gmax = protocols.max_rate(base, q, "vary_G")
    assert gmax == pytest.approx(IDEAL.lam ** 2 / (2 * IDEAL.kappa), rel=1e-6)
    x, _ = protocols.invert_rates(base, q, "vary_G", np.full(3, gmax), geo)
    assert np.allclose(x, 1.5 * IDEAL.kappa, rtol=1e-5)
    x0, _ = protocols.invert_rates(base, q, "vary_G", np.array([0.0, 1e-12 * gmax]), geo)
    assert x0.max() < 1e-4 * IDEAL.kappa
    with pytest.raises(UnreachableRateError):
        protocols.invert_rates(base, q, "vary_G", np.array([1.1 * gmax]), geo)


def test_vary_dc_off_state_is_far_detuned():
    base = IDEAL.base
    geo = protocols.path_geometry(base, "vary_dc")
    q = interface.QubitParams(omega_q=geo["omega_q"], lam=IDEAL.lam)
    gmax = protocols.max_rate(base, q, "vary_dc")
    x, _ = protocols.invert_rates(base, q, "vary_dc", np.array([gmax, 1e-3 * gmax]), geo)
    assert x[1] - geo["x_res"] > 5 * IDEAL.kappa
    assert abs(x[0] - geo["x_res"]) < IDEAL.kappa


@pytest.mark.parametrize("mode", ["vary_G", "vary_dc"])
def test_control_round_trip(mode):
    cfg = replace(IDEAL, mode=mode, n_sched=201)
    shape, sched = protocols.design(cfg)
    assert np.array_equal(sched.gamma2, sched.gamma1[::-1])
    base = cfg.base
    q = interface.QubitParams(omega_q=sched.omega_q, lam=cfg.lam)
    k = sched.meta["clipped_points"]
    assert k == 0
    for i in range(0, sched.t.size, 10):
        for node_ix, target in ((0, sched.gamma1[i]), (1, sched.gamma2[i])):
            n = om_node.LinearizedNode(base, complex(sched.G[i, node_ix]),
                                       float(sched.delta_c_eff[i, node_ix]))
            got = interface.effective_coefficients(n, q, warn=False).gamma
            assert got == pytest.approx(target, rel=1e-6)
    # first-iteration resonance correction
    assert np.allclose(sched.shifts[:, 0], -sched.shifts[:, 1])
    assert sched.adiabaticity <= protocols.ADIABATIC_LIMIT


def test_adiabaticity_guard():
    cfg = replace(IDEAL, lam=0.05, tp_units=12.0, n_sched=201)
    with pytest.raises(AdiabaticityError):
        protocols.design(cfg)
    with pytest.warns(RuntimeWarning):
        protocols.design(replace(cfg, guard="warn"))


def test_ideal_transfer(ideal_design, ideal_fidelity):
    assert ideal_fidelity >= 0.99


def test_ideal_populations_match_amplitude_equations(ideal_design):
    shape, sched = ideal_design
    res = protocols.simulate(IDEAL, sched)
    g1, g2 = sched.gamma1, sched.gamma2
    amp = protocols.dark_state_amplitudes(sched.t, g1, g2)
    p_me = res.outputs[1, 1][1, 1].real
    assert abs(p_me - abs(amp.v2[-1]) ** 2) <= 1e-4
    assert res.trace_drift <= 1e-8


@pytest.mark.parametrize("field,values", [
    ("kappa_0", [0.0, 0.02 * 0.05, 0.05 * 0.05]),
    ("thermal_rate", [0.0, 0.005 * 0.05, 0.01 * 0.05]),
    ("t2", [math.inf, 0.05 / (0.005 * 0.005 ** 2), 0.05 / (0.01 * 0.005 ** 2)]),
])
def test_fidelity_monotone_in_imperfections(field, values):
    f = [protocols._single(replace(IDEAL, **{field: v})).fidelity for v in values]
    assert f[0] >= f[1] >= f[2]


def test_sweep_configs_small_parameters():
    trip = protocols.sweep_configs("dephasing", [0.01], IDEAL)
    x, cfg, ref = trip[0]
    assert x == 0.01
    assert IDEAL.kappa / (IDEAL.lam ** 2 * cfg.t2) == pytest.approx(0.01)
    (x, cfg, ref), = protocols.sweep_configs("stokes", [0.08], IDEAL)
    assert x == pytest.approx(0.0064) and cfg.zeta == 1 and ref.zeta == 0
    assert cfg.lam / cfg.kappa == pytest.approx(IDEAL.lam / IDEAL.kappa)
    with pytest.raises(ValueError):
        protocols.sweep_configs("bogus", [0.1], IDEAL)


def test_fit_slopes_exact_on_linear_data():
    sweeps = {"a": [(0.1, 0.4), (0.2, 0.8)], "b": [(1.0, 2.0), (3.0, 6.0)]}
    assert protocols.fit_infidelity_coefficients(sweeps) == {"a": pytest.approx(4.0),
                                                             "b": pytest.approx(2.0)}


def test_presets():
    spin = protocols.transfer_preset("spin")
    assert spin.kappa == pytest.approx(0.2) and spin.lam == pytest.approx(0.01)
    assert spin.t2 == pytest.approx(10e-3 * 2 * math.pi * 5e6)
    charge = protocols.transfer_preset("charge")
    assert charge.kappa == pytest.approx(0.1) and charge.lam == pytest.approx(0.1)
    assert protocols.transfer_preset("ideal") == IDEAL
    with pytest.raises(ValueError):
        protocols.transfer_preset("nope")


def test_parallel_pool_matches_serial():
    cfgs = [replace(IDEAL, n_sched=201, kappa_0=k) for k in (0.0, 0.002)]
    serial = protocols._pool_map(protocols._fid, cfgs, 1)
    pooled = protocols._pool_map(protocols._fid, cfgs, 2)
    assert serial == pooled
