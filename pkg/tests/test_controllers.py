import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from twomass.approx import CompensatorSpec
from twomass.controllers import (ControllerSet, GeneralizedPlant, ToleranceError, WeightSet,
                                 assemble_cfo, build_fpp, build_generalized_plant, build_kpil,
                                 build_weights, canonical_cfo, canonical_hinf_controller,
                                 closed_loop_norm_check, compare_response, feedforward_ustar,
                                 ff_transfer, integrator_augment, lft, plan_feedforward,
                                 sensitivity_yd, surrogate_plant)
from twomass.lti import LTIError, RationalTF, StateSpaceModel
from twomass.plant import build_plant, plant_tf
from twomass.signals import ReferenceSpec
from twomass.sim import get_kernel


def test_weight_limits():
    w = build_weights()
    assert w.w1.dcgain() == pytest.approx(100.0)
    assert w.w1.high_frequency_gain == pytest.approx(0.01)
    assert w.w2.dcgain() == pytest.approx(0.001)
    assert w.w2.high_frequency_gain == pytest.approx(0.95)


def test_weight_shape_is_validated():
    w = build_weights()
    with pytest.raises(ValueError):
        WeightSet(w.w2, w.w2)


def test_generalized_plant_realization_matches_blocks(plant):
    gp = build_generalized_plant(surrogate_plant(plant), build_weights())
    m = gp.to_ss()
    s = 1j * np.geomspace(1e-2, 1e3, 25)
    np.testing.assert_allclose(m.evaluate(s), gp.evaluate(s), rtol=1e-7, atol=1e-12)


def test_generalized_plant_rejects_pure_delay(plant):
    with pytest.raises(LTIError):
        GeneralizedPlant(plant_tf(plant, None), build_weights())


def test_static_lft():
    # F_l = D11 + D12 K (I - D22 K)^-1 D21
    P = StateSpaceModel(np.zeros((0, 0)), np.zeros((0, 2)), np.zeros((2, 0)), [[0.0, 1.0], [1.0, 0.0]])
    K = StateSpaceModel(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[0.5]])
    assert lft(P, K, 1, 1).D[0, 0] == pytest.approx(0.5)
    P2 = StateSpaceModel(np.zeros((0, 0)), np.zeros((0, 2)), np.zeros((2, 0)), [[0.0, 1.0], [1.0, 0.5]])
    K2 = StateSpaceModel(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[1.0]])
    assert lft(P2, K2, 1, 1).D[0, 0] == pytest.approx(2.0)
    with pytest.raises(LTIError):
        lft(P2, StateSpaceModel(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[2.0]]), 1, 1)


@given(st.floats(0.1, 10.0), st.floats(0.1, 10.0))
def test_dynamic_lft_matches_feedback_formula(a, k):
    # P = [[G, G], [G, G]] with G = 1/(s+a); K = -k gives G / (1 + k G)
    g = 1.0 / a
    P = StateSpaceModel([[-a]], [[1.0, 1.0]], [[1.0], [1.0]], np.zeros((2, 2)))
    K = StateSpaceModel(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[-k]])
    cl = lft(P, K, 1, 1)
    np.testing.assert_allclose(cl.poles(), [-(a + k)])
    assert cl.evaluate([0.0])[0, 0, 0] == pytest.approx(g / (1 + k * g))


def test_norm_check_dominates_channel_peaks(plant, controllers):
    gp = build_generalized_plant(surrogate_plant(plant), build_weights())
    nc = closed_loop_norm_check(gp, controllers)
    assert np.isfinite(nc.gamma)
    for peak, _ in nc.channel_peaks.values():
        assert peak <= nc.gamma * (1 + 1e-5)
    assert set(nc.as_dict()["channels"]) == {"z1<-r", "z1<-d_u", "z2<-r", "z2<-d_u"}


def test_integrator_augment():
    c = RationalTF.from_zpk([-1.0], [-3.0], 2.0)
    c_eps, c_prime = integrator_augment(c, 1e-3)
    assert c_eps.dcgain() == pytest.approx(c.dcgain() / 1e-3)
    assert np.min(np.abs(c_prime.poles())) == 0.0
    with pytest.raises(ValueError):
        integrator_augment(c, 5e-3)


def test_canonical_controllers(controllers):
    for c in (controllers.c_inf_1, controllers.c_inf_2, controllers.c_fo):
        assert c.order == 7
        assert np.min(np.abs(c.poles())) < 1e-12
        assert c.is_proper
    # integrating channels cancel at y = r once the reference gain is balanced
    assert controllers.c_inf_1.num(0.0) == pytest.approx(-controllers.c_inf_2.num(0.0), rel=1e-12)
    assert controllers.dc_balance == pytest.approx(1.0008, abs=1e-4)
    assert canonical_hinf_controller(balance_dc=False).dc_balance == 1.0


def test_controller_set_validation(controllers):
    c1 = controllers.c_inf_1
    with pytest.raises(LTIError):
        ControllerSet(c1, RationalTF.from_zpk([], [-1.0], 1.0), controllers.c_fo)
    with pytest.raises(ValueError):
        controllers.loop("pid")


def test_controller_json_roundtrips_gain(controllers):
    d = json.loads(controllers.to_json())
    assert len(d["c_fo"]["poles"]) == 7
    assert d["c_fo"]["gain"] == pytest.approx(120.2)


def test_hinf_realization_matches_channels(controllers):
    m = controllers.hinf_ss()
    s = 1j * np.array([0.1, 1.0, 30.0])
    G = m.evaluate(s)
    np.testing.assert_allclose(G[:, 0, 0], controllers.c_inf_1(s), rtol=1e-8)
    np.testing.assert_allclose(G[:, 0, 1], controllers.c_inf_2(s), rtol=1e-8)


def test_prefilter_notches_plant_resonance(plant):
    osc = plant_tf(plant).poles()
    osc = osc[np.abs(osc.imag) > 1]
    z = build_fpp().zeros()
    for p in osc:
        assert np.min(np.abs(z - p)) / abs(p) < 2e-3
    assert not build_fpp().is_proper
    assert build_kpil().is_proper


def test_assembled_controller_within_tolerance(plant):
    spec = CompensatorSpec(z=2.0 / plant.tau_n)
    c = assemble_cfo(spec)
    assert c.order == 7
    mag, ph, _, _ = compare_response(c, canonical_cfo())
    assert mag < 0.05 and ph < 3.0
    with pytest.raises(ToleranceError):
        assemble_cfo(spec, mag_tol=1e-4)


def test_feedforward_inverts_linear_plant(plant):
    # open-loop RK4 from the planned state must follow the reference
    ref = ReferenceSpec(0.005, 0.010, 2.0, (0.5,))
    ts = 1e-4
    t = np.arange(0.0, 3.0, ts)
    plan = plan_feedforward(ref, t, plant, "0")
    u = feedforward_ustar(plan, plant)
    m = build_plant(plant)[0]
    # RK4 stages need the input at half steps; feed the midpoint value
    tm = t + 0.5 * ts
    um = feedforward_ustar(plan_feedforward(ref, tm, plant, "0"), plant)
    X = get_kernel("python").rk4_open_loop(m.A, m.B, plan.x_star[:, 0], um, ts)
    err = X[:-1, 2] - ref(t)
    assert np.max(np.abs(err)) < 1e-7
    assert np.max(np.abs(u)) > 0


def test_feedforward_plan_shifts(plant):
    ref = ReferenceSpec(0.0, 0.01, 1.0, (1.0,))
    t = np.linspace(0, 3, 31)
    a = plan_feedforward(ref, t, plant, "0")
    b = plan_feedforward(ref, t - plant.tau_n, plant, "+tau_n")
    np.testing.assert_allclose(a.x_star, b.x_star, atol=1e-15)
    with pytest.raises(ValueError):
        plan_feedforward(ref, t, plant, "later")


def test_feedforward_undefined_without_zero(plant):
    q = plant.replace(zeta=0.0)
    plan = plan_feedforward(ReferenceSpec(), np.linspace(0, 1, 5), q, "0")
    with pytest.raises(LTIError):
        feedforward_ustar(plan, q)


def test_ff_transfer_identity(plant):
    w = np.geomspace(0.1, 100, 20)
    c = canonical_cfo()
    g = plant_tf(plant)
    lhs = (ff_transfer(c, plant, w) - c(1j * w)) * g(1j * w)
    np.testing.assert_allclose(lhs, np.exp(-1j * w * plant.tau_n), rtol=1e-10)


def test_sensitivity_matches_direct_formula(plant, controllers):
    res = sensitivity_yd(controllers.c_fo, plant)
    w = np.geomspace(0.1, 10, 7)
    s = 1j * w
    g = plant_tf(plant)(s)
    ref = g / (1 + controllers.c_fo(s) * g * np.exp(-s * plant.tau_n))
    np.testing.assert_allclose(res.evaluate(w), ref, rtol=1e-12)
    assert res.stable


def test_sensitivity_low_frequency_limit(plant, controllers):
    # with an integrating loop |S_yd| -> 1 / |C| as w -> 0
    for name in ("fo", "hinf"):
        c = controllers.loop(name)
        res = sensitivity_yd(c, plant)
        w = np.array([1e-5])
        assert abs(res.evaluate(w)[0]) * abs(c(1j * w)[0]) == pytest.approx(1.0, rel=1e-3)


def test_sensitivity_pade_models_agree_without_delay(plant, controllers):
    exact = sensitivity_yd(controllers.c_fo, plant, tau=0.0)
    pade = sensitivity_yd(controllers.c_fo, plant, tau=0.0, delay_model="pade2")
    assert exact.peak == pytest.approx(pade.peak, rel=1e-4)


def test_sensitivity_flags_unstable_loop(plant, controllers):
    res = sensitivity_yd(controllers.c_fo * 20.0, plant)
    assert not res.stable
    with pytest.raises(ValueError):
        sensitivity_yd(controllers.c_fo, plant, delay_model="pade3")


def test_open_loops_agree_in_working_band(plant, controllers):
    w = np.geomspace(0.1, 3.0, 100)
    ratio = np.abs(controllers.loop("fo")(1j * w) / controllers.loop("hinf")(1j * w))
    assert np.max(np.abs(20 * np.log10(ratio))) <= 3.0
