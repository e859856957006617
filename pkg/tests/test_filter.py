import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from npswab import force_filter as ff
from npswab.errors import ConfigError


@pytest.mark.parametrize("alpha", ff.ALPHA_PRESETS)
def test_step_response_is_analytic(alpha):
    t = np.linspace(0.0, 5.0, 5001)
    y = ff.step_response(alpha, t, amplitude=0.5, dt=1e-3)
    assert np.max(np.abs(y - 0.5 * (1 - np.exp(-alpha * t)))) <= 1e-6


@pytest.mark.parametrize("alpha", ff.ALPHA_PRESETS)
def test_value_at_time_constant(alpha):
    y = ff.step_response(alpha, np.array([1.0 / alpha]), 0.5, dt=1e-4)
    assert y[0] == pytest.approx(0.5 * (1 - np.exp(-1)), abs=1e-6)


def test_step_by_step_matches_closed_form():
    state = ff.FilterState(f=np.zeros(3), alpha=3.0)
    F = np.array([0.5, -0.2, 1.0])
    for _ in range(1000):
        state = ff.filter_step(state, F, 1e-3)
    assert np.allclose(state.f, F * (1 - np.exp(-3.0)), atol=1e-12)


def test_alpha_zero_holds():
    state = ff.FilterState(f=np.array([0.1, 0.2, 0.3]), alpha=0.0)
    out = ff.filter_step(state, np.ones(3), 1e-3)
    assert np.array_equal(out.f, state.f)


def test_euler_stability_guard():
    state = ff.FilterState(f=np.zeros(3), alpha=2000.0)
    with pytest.raises(ConfigError):
        ff.filter_step(state, np.ones(3), 1e-3, method="euler")
    # the exact form stays bounded
    out = ff.filter_step(state, np.ones(3), 1e-3)
    assert np.all(out.f <= 1.0)


def test_bad_inputs():
    with pytest.raises(ConfigError):
        ff.FilterState(f=np.zeros(3), alpha=-1.0)
    with pytest.raises(ConfigError):
        ff.filter_step(ff.FilterState(np.zeros(3)), np.ones(3), 0.0)
    with pytest.raises(ConfigError):
        ff.filter_step(ff.FilterState(np.zeros(3)), np.ones(3), 1e-3, method="rk4")


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 50.0), st.floats(-5, 5), st.floats(-5, 5))
def test_output_stays_between_state_and_input(alpha, f0, F):
    out = ff.filter_step(ff.FilterState(np.array([f0]), alpha), np.array([F]), 1e-3)
    lo, hi = min(f0, F), max(f0, F)
    assert lo - 1e-15 <= out.f[0] <= hi + 1e-15
