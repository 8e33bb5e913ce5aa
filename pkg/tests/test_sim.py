import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cart.baselines import PolicySpec
from cart.dynamics import DisturbanceSpec
from cart.errors import ConfigError
from cart.scenario import canned
from cart.sim import (ScenarioSpec, envelope_monte_carlo, monte_carlo, random_configuration, resolve_states,
                      run_scenario, wilson_interval)
from cart.world import SafetyConfig, pairwise_clearance

CFG = SafetyConfig(0.1, 0.0, 0.5, dim=2)


def _pair_spec(**kw):
    base = dict(initial_positions=[[0, 0], [2, 0]], goal_positions=[[2, 1], [0, 1]], safety=CFG,
                obstacles=[[1, 0.5]], horizon=6.0)
    base.update(kw)
    return ScenarioSpec("double_integrator", **base)


def test_global_reference_cost_matches_plan():
    res = run_scenario(_pair_spec(policy=PolicySpec("global_reference")))
    assert res.success and not res.collided
    assert res.control_effort == pytest.approx(res.plan_cost, rel=0.02)


def test_effort_and_flags_follow_their_definitions():
    spec = canned("nonlinear_small", ['policy.kind="learned_emulated"'])
    res = run_scenario(spec)
    J = float(np.sum(res.inputs**2) * spec.dt)
    assert res.control_effort == pytest.approx(J, rel=1e-12)
    assert res.collided == (res.min_h_series.min() < 0)
    near = np.linalg.norm(res.positions[-1] - res.goals, axis=1) <= spec.goal_tolerance
    assert res.success == (not res.collided and bool(near.all()))


def test_run_is_bit_identical():
    spec = canned("nonlinear_large")
    a, b = run_scenario(spec, 3), run_scenario(spec, 3)
    assert np.array_equal(a.positions, b.positions) and np.array_equal(a.inputs, b.inputs)
    assert a.control_effort == b.control_effort


def test_cart_full_without_error_or_disturbance_stays_safe():
    spec = canned("nonlinear_large_cart", ["disturbance.d_bar=0.0", "disturbance.gamma_bar=0.0",
                                           "policy.error_magnitude=0.0"])
    res = run_scenario(spec)
    assert res.min_h > 0 and res.success


def test_deterministic_spec_has_zero_variance():
    spec = canned("nonlinear_small", ["disturbance.d_bar=0.0", "disturbance.gamma_bar=0.0"])
    mc = monte_carlo(spec, n_runs=3)
    assert mc.std_J == 0.0 and mc.success_rate in (0.0, 1.0)


def test_unsafe_initial_configuration_rejected():
    with pytest.raises(ConfigError):
        _pair_spec(initial_positions=[[0, 0], [0.08, 0]])
    with pytest.raises(ConfigError):
        _pair_spec(dt=0.0)
    with pytest.raises(ConfigError):
        _pair_spec(horizon=0.01)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_random_configurations_keep_separation(seed):
    rng = np.random.default_rng(seed)
    obstacles = np.array([[0.0, 0.0]])
    P = random_configuration(rng, 5, (np.full(2, -2.0), np.full(2, 2.0)), 0.3, obstacles, np.eye(2))
    d = np.linalg.norm(P[:, None] - P[None], axis=2) + np.eye(5) * 10
    assert d.min() >= 0.3 and np.linalg.norm(P - obstacles[0], axis=1).min() >= 0.3


def test_randomized_states_depend_on_run_index():
    spec = canned("spacecraft_grid")
    a, b = resolve_states(spec, 0)[0], resolve_states(spec, 1)[0]
    assert not np.allclose(a, b)
    assert pairwise_clearance(a, spec.obstacles, spec.safety.r_s, spec.safety.r_sen, spec.safety.xi) > 0


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 500), st.floats(0, 1))
def test_wilson_interval_brackets_and_shrinks(n, frac):
    k = int(round(frac * n))
    lo, hi = wilson_interval(k, n)
    assert 0 <= lo <= k / n <= hi <= 1
    lo4, hi4 = wilson_interval(4 * k, 4 * n)
    assert hi4 - lo4 <= hi - lo + 1e-12


def test_envelope_check_holds_and_scales_with_disturbance():
    small = envelope_monte_carlo(disturbance=DisturbanceSpec(0.02, 0.02), n_paths=200, horizon=2.0)
    large = envelope_monte_carlo(disturbance=DisturbanceSpec(0.2, 0.2), n_paths=200, horizon=2.0)
    assert small.worst_mean_ratio() <= 1.1 and large.worst_mean_ratio() <= 1.1
    assert large.mean_s[-1] > small.mean_s[-1]
    assert large.envelope.a > small.envelope.a
