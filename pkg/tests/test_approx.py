import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from twomass.approx import (CompensatorSpec, OustaloupSpec, oustaloup, oustaloup_corners,
                            pade_delay, partial_compensator)


@given(st.floats(0.01, 2.0), st.integers(1, 2), st.floats(1e-3, 1e3))
def test_pade_is_all_pass(tau, order, w):
    assert abs(abs(pade_delay(tau, order)(1j * w)) - 1.0) < 1e-12


@pytest.mark.parametrize("order, tol", [(1, 1e-3), (2, 1e-6)])
def test_pade_phase_at_low_frequency(order, tol):
    tau, w = 0.4, 0.1
    ph = np.angle(pade_delay(tau, order)(1j * w))
    assert ph == pytest.approx(-tau * w, abs=tol)


def test_pade_invalid():
    with pytest.raises(ValueError):
        pade_delay(0.0)
    with pytest.raises(ValueError):
        pade_delay(0.1, 3)


def test_oustaloup_centre_normalization():
    spec = OustaloupSpec(0.5, 0.1, 100.0, 2)
    wc = math.sqrt(0.1 * 100.0)
    assert abs(oustaloup(spec)(1j * wc)) == pytest.approx(wc**0.5, rel=1e-12)


def test_oustaloup_corners_interlace():
    z, p = oustaloup_corners(OustaloupSpec(0.5, 0.1, 100.0, 2))
    assert np.all(z < p)
    assert np.all(p[:-1] < z[1:])


def _fit_error(n):
    # log-magnitude and phase deviation from (jw)**0.5 two decades inside the band
    spec = OustaloupSpec(0.5, 1e-2, 1e2, n)
    w = np.geomspace(1e-1, 1e1, 400)
    h = oustaloup(spec)(1j * w)
    mag = np.max(np.abs(np.log10(np.abs(h)) - 0.5 * np.log10(w)))
    ph = np.max(np.abs(np.degrees(np.angle(h)) - 45.0))
    return mag, ph


def test_oustaloup_fit_improves_with_cells():
    errs = [_fit_error(n) for n in (1, 2, 3, 4)]
    for a, b in zip(errs, errs[1:]):
        assert b[0] < a[0]
    assert errs[-1][0] < 1e-3
    # the phase error floor is set by the finite band edges
    assert max(e[1] for e in errs[1:]) < 3.0


@given(st.floats(-1.0, 1.0), st.floats(0.1, 10.0))
def test_oustaloup_frequency_scaling(alpha, c):
    # scaling the band by c scales the filter argument by c and the gain by c**alpha
    base = OustaloupSpec(alpha, 0.1, 10.0, 1)
    scaled = OustaloupSpec(alpha, 0.1 * c, 10.0 * c, 1)
    w = np.array([0.05, 1.0, 20.0])
    np.testing.assert_allclose(oustaloup(scaled)(1j * c * w), c**alpha * oustaloup(base)(1j * w), rtol=1e-9)


def test_compensator_dc_anchor_and_inverse():
    q, q_inv = partial_compensator(CompensatorSpec(z=5.2, nu=2, n_cells=2))
    assert q_inv.dcgain() == pytest.approx(1.0)
    w = np.geomspace(0.1, 10, 20)
    np.testing.assert_allclose(q(1j * w) * q_inv(1j * w), 1.0, rtol=1e-10)
    assert np.all(q_inv.poles().real < 0)
    assert np.all(q_inv.zeros().real < 0)


def test_compensator_tracks_fractional_power_in_band():
    z = 5.2
    q, _ = partial_compensator(CompensatorSpec(z=z, nu=2, omega_l=0.05, omega_h=50.0, n_cells=3))
    w = np.geomspace(0.1, 10.0, 20)
    ref = (1 + 1j * w / z) ** 0.5
    np.testing.assert_allclose(np.abs(q(1j * w)), np.abs(ref), rtol=0.03)


def test_compensator_infinite_nu_is_identity():
    q, q_inv = partial_compensator(CompensatorSpec(z=1.0, nu=math.inf))
    assert q.dcgain() == 1.0 and q_inv.order == 0


def test_compensator_warns_outside_band():
    with pytest.warns(UserWarning):
        partial_compensator(CompensatorSpec(z=100.0, omega_h=50.0))


def test_spec_validation():
    with pytest.raises(ValueError):
        CompensatorSpec(z=1.0, nu=1.5)
    with pytest.raises(ValueError):
        OustaloupSpec(0.5, 10.0, 1.0)


def test_pade2_phase_at_nominal_delay():
    tau = 0.3844
    assert abs(np.angle(pade_delay(tau, 2)(1j)) + tau) <= 0.02


def test_oustaloup_slope_example():
    h = oustaloup(OustaloupSpec(0.5, 0.05, 50.0, 1))
    assert abs(h(5j)) / abs(h(0.5j)) == pytest.approx(10**0.5, rel=0.15)


def test_oustaloup_integrator_trend():
    h = oustaloup(OustaloupSpec(-1.0, 0.05, 50.0, 2))
    mag = np.abs(h(1j * np.geomspace(0.5, 5, 30)))
    assert np.all(np.diff(mag) < 0)
    assert mag[0] / mag[-1] == pytest.approx(10.0, rel=0.15)


def test_compensator_scale_covariance():
    # doubling z and the band doubles every corner frequency
    a = partial_compensator(CompensatorSpec(z=5.2, omega_l=0.05, omega_h=50.0))[1]
    b = partial_compensator(CompensatorSpec(z=10.4, omega_l=0.1, omega_h=100.0))[1]
    np.testing.assert_allclose(np.sort(b.poles().real), 2 * np.sort(a.poles().real), rtol=1e-9)
    np.testing.assert_allclose(np.sort(b.zeros().real), 2 * np.sort(a.zeros().real), rtol=1e-9)
