import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cohere_twin.geometry import (
    MAX_ALPHA,
    MAX_GAMMA,
    SPEED_OF_LIGHT,
    InstrumentConfig,
    NoSpatialFringes,
    SmallAngleViolation,
    alpha_to_delay,
    collimation_ok,
    delay_to_alpha,
    fringe_period,
    gamma_to_shear,
    max_delay,
    max_shear,
    min_collimation_radius,
    shear_to_gamma,
)

D = 4.18e-3


def test_delay_of_reference_rotation():
    # tan(alpha) = c * 93 fs / D
    alpha = math.atan(SPEED_OF_LIGHT * 93e-15 / D)
    tau = alpha_to_delay(InstrumentConfig(alpha=alpha))
    assert tau == pytest.approx(93e-15, rel=1e-12)
    assert delay_to_alpha(tau, D) == pytest.approx(alpha, rel=1e-12)


def test_delay_sign_follows_alpha():
    assert alpha_to_delay(InstrumentConfig(alpha=-0.01)) == -alpha_to_delay(InstrumentConfig(alpha=0.01))


def test_shear_at_40_um():
    gamma = math.asin(40e-6 / D)
    state = gamma_to_shear(InstrumentConfig(gamma=gamma))
    assert state.delta_y == pytest.approx(40e-6, rel=1e-12)
    # D (1 - cos gamma) at gamma = 9.57 mrad is about 0.19 um
    assert state.delta_x == pytest.approx(0.191e-6, rel=0.01)
    assert state.tau == 0.0


def test_delta_x_precise_at_tiny_gamma():
    state = gamma_to_shear(InstrumentConfig(gamma=1e-9))
    assert state.delta_x == pytest.approx(0.5 * D * 1e-18, rel=1e-9)


@given(st.floats(min_value=-0.2499, max_value=0.2499))
def test_delta_x_identity_and_bound(gamma):
    state = gamma_to_shear(InstrumentConfig(gamma=gamma))
    exact = state.delta_y**2 / (D * (1.0 + math.cos(gamma)))
    assert state.delta_x == pytest.approx(exact, rel=1e-12, abs=1e-30)
    assert state.delta_x >= state.delta_y**2 / (2 * D) * (1 - 1e-12)
    assert state.delta_x >= 0


@given(st.floats(min_value=-0.99 * max_shear(D), max_value=0.99 * max_shear(D)))
def test_shear_round_trip(dy):
    gamma = shear_to_gamma(dy, D)
    assert gamma_to_shear(InstrumentConfig(gamma=gamma)).delta_y == pytest.approx(dy, rel=1e-12, abs=1e-20)


def test_shear_and_delay_are_independent():
    a = gamma_to_shear(InstrumentConfig(alpha=0.02, gamma=0.1))
    b = gamma_to_shear(InstrumentConfig(alpha=0.0, gamma=0.1))
    assert a.delta_y == b.delta_y and a.delta_x == b.delta_x
    assert a.tau == alpha_to_delay(InstrumentConfig(alpha=0.02))


@pytest.mark.parametrize("alpha,gamma", [(MAX_ALPHA, 0.0), (-0.2, 0.0), (0.0, MAX_GAMMA), (0.0, math.nan)])
def test_small_angle_guard(alpha, gamma):
    with pytest.raises(SmallAngleViolation):
        InstrumentConfig(alpha=alpha, gamma=gamma)


def test_reachable_limits():
    assert max_shear(D) > 1e-3  # the 1 mm largest shear is reachable
    assert max_delay(D) == pytest.approx(D * math.tan(MAX_ALPHA) / SPEED_OF_LIGHT)
    with pytest.raises(SmallAngleViolation):
        shear_to_gamma(max_shear(D), D)
    with pytest.raises(SmallAngleViolation):
        delay_to_alpha(2 * max_delay(D), D)


def test_invalid_instrument():
    with pytest.raises(ValueError):
        InstrumentConfig(walkoff_D=0.0)
    with pytest.raises(ValueError):
        InstrumentConfig(detector_distance_d=-1.0)


def test_instrument_dict_round_trip():
    cfg = InstrumentConfig(alpha=0.01, gamma=0.02)
    assert InstrumentConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(KeyError):
        InstrumentConfig.from_dict({"walkoff": 1.0})


def test_fringe_period_formula():
    assert fringe_period(2.0, 1e-3, 700e-9, 0.1) == pytest.approx(700e-9 * 2.1 / 1e-3)
    with pytest.raises(NoSpatialFringes):
        fringe_period(2.0, 0.0, 700e-9, 0.1)


def test_min_collimation_radius_reference():
    r = min_collimation_radius(1e-3, 2e-3, 700e-9, 0.1)
    assert r == pytest.approx(2e-3 * 1e-3 / 700e-9 - 0.1, rel=1e-12)
    assert 2.70 <= r <= 2.80


def test_collimation_boundary_is_strict():
    r = min_collimation_radius(1e-3, 2e-3, 700e-9, 0.1)
    assert not collimation_ok(r * (1 - 1e-9), 1e-3, 2e-3, 700e-9, 0.1)
    assert collimation_ok(r * (1 + 1e-9), 1e-3, 2e-3, 700e-9, 0.1)


def test_min_collimation_radius_clamps_at_zero():
    assert min_collimation_radius(1e-6, 1e-4, 700e-9, 1.0) == 0.0


@given(
    st.floats(1e-5, 1e-3),
    st.floats(1e-4, 5e-3),
    st.floats(300e-9, 1.5e-6),
    st.floats(0.0, 0.5),
    st.floats(1.001, 10.0),
)
def test_collimation_monotone_in_radius(dy, phi, lam, d, factor):
    r = min_collimation_radius(dy, phi, lam, d)
    R = max(r, 1e-3) * factor
    assert collimation_ok(R, dy, phi, lam, d)
    assert np.isfinite(fringe_period(R, dy, lam, d))
