import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cart.barrier import barrier_terms
from cart.checks import random_observation
from cart.contraction import metric_at
from cart.dynamics import make_plant
from cart.gains import FilterGains, RobustGains
from cart.general_filter import safety_filter_general, u_bar_general
from cart.lagrangian_filter import safety_filter_lagrangian, u_bar_lagrangian
from cart.robust_filter import TargetPoint, robust_filter, robust_filter_general
from cart.world import AgentState, Observation, SafetyConfig

CFG2 = SafetyConfig(0.2, 0.0, 1.0, dim=2)


def _lagrangian_rate(plant, obs, u, gains, cfg):
    """Continuous-time rate of k_p psi + e_v^T M e_v / 2 under input u (static neighbors only)."""
    p, v = obs.self_state.p, obs.self_state.v
    ev, v_d, vdot_d = barrier_terms(obs, cfg, gains.k_p, neighbor_velocities=[])
    e = v - v_d
    M = plant.mass_matrix(p)
    vdot = plant.accel(p, v, u)
    M_dot = plant.mass_matrix_dot(p, v)
    return gains.k_p * ev.grad_p @ v + e @ M @ (vdot - vdot_d) + 0.5 * e @ M_dot @ e, ev, e, M


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from(["double_integrator", "two_link_arm"]))
def test_lagrangian_filter_enforces_decrease(seed, key):
    rng = np.random.default_rng(seed)
    plant = make_plant(key)
    obs0 = random_observation(rng, 2, CFG2, 0, 3)
    p = rng.uniform(-1, 1, 2)
    obs = Observation(AgentState(p, rng.standard_normal(2)), (),
                      tuple((j, q + p) for j, q in obs0.neighbor_obstacles))
    gains = FilterGains(rng.uniform(0.1, 1), rng.uniform(0.1, 2))
    u_l = 5 * rng.standard_normal(2)
    out = safety_filter_lagrangian(u_l, plant, obs, [], CFG2, gains)
    rate, ev, e, M = _lagrangian_rate(plant, obs, out.u, gains, CFG2)
    bound = -gains.k_p**2 * ev.grad_p @ ev.grad_p - gains.k_v * e @ M @ e
    assert rate <= bound + 1e-8 * (1 + abs(bound))


def test_lagrangian_filter_passes_safe_input_through():
    plant = make_plant("double_integrator")
    obs = Observation(AgentState([0.0, 0.0], [0.0, 0.0]), (), ((0, np.array([0.5, 0.0])),))
    gains = FilterGains(1.0, 1.0)
    u_bar = u_bar_lagrangian(plant, obs, [], CFG2, gains)
    away = u_bar - 0.1 * (obs.self_state.v - barrier_terms(obs, CFG2, 1.0, neighbor_velocities=[])[1])
    out = safety_filter_lagrangian(away, plant, obs, [], CFG2, gains)
    assert not out.active and np.array_equal(out.u, away)


def test_relaxation_widens_the_feasible_set():
    plant = make_plant("double_integrator")
    obs = Observation(AgentState([0.0, 0.0], [0.3, 0.0]), (), ((0, np.array([0.5, 0.0])),))
    u_l = np.array([3.0, 0.0])
    strict = safety_filter_lagrangian(u_l, plant, obs, [], CFG2, FilterGains(1.0, 1.0))
    relaxed = safety_filter_lagrangian(u_l, plant, obs, [], CFG2, FilterGains(1.0, 1.0, relaxation=2.0))
    assert strict.active
    assert np.linalg.norm(relaxed.u - u_l) < np.linalg.norm(strict.u - u_l)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_general_filter_projection_and_full_actuation(seed):
    rng = np.random.default_rng(seed)
    plant = make_plant("nonlinear_example")
    base = random_observation(rng, 2, CFG2, 0, 2)
    p = rng.uniform(-1, 1, 2)
    obs = Observation(AgentState(p, rng.uniform(-1, 1, 2)), (),
                      tuple((j, q + p) for j, q in base.neighbor_obstacles))
    gains = FilterGains(0.5, 1.0)
    u_l = 5 * rng.standard_normal(2)
    out = safety_filter_general(u_l, plant, obs, [], CFG2, gains)
    assert out.assumption_ok
    assert (out.u - out.u_bar) @ out.normal <= 1e-9 * (1 + np.abs(out.u).max())


def test_u_bar_rates_on_unit_mass_plant():
    """With M = I both filters project along e_v; check the rate each u_bar assigns."""
    di = make_plant("double_integrator")
    aff = di.as_affine()
    obs = Observation(AgentState([0.1, 0.0], [0.4, -0.2]), (), ((0, np.array([0.6, 0.2])),))
    g = FilterGains(0.7, 1.3, general_variant="printed")
    ub_g = u_bar_general(aff, obs, [], CFG2, g, metric=np.eye(2))
    ub_l = u_bar_lagrangian(di, obs, [], CFG2, FilterGains(0.7, 1.3, u_bar_variant="revised"))
    ev, v_d, vdot_d = barrier_terms(obs, CFG2, 0.7, neighbor_velocities=[])
    e = obs.self_state.v - v_d
    # both make e^T (u_bar - vdot_d) + k_p e^T grad psi the same target rate
    lhs_g = e @ (ub_g - vdot_d) + 0.7 * e @ ev.grad_p
    assert lhs_g == pytest.approx(0.0, abs=1e-12)
    lhs_l = e @ (ub_l - vdot_d) + 0.7 * e @ ev.grad_p
    assert lhs_l == pytest.approx(e @ v_d + 0.7 * e @ ev.grad_p - 1.3 * e @ e, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31))
def test_robust_filter_composite_error_decays(seed):
    """With u = u_bar the composite error obeys d/dt s^T M s = -2 k_r s^T M s (no disturbance)."""
    rng = np.random.default_rng(seed)
    plant = make_plant("two_link_arm")
    gains = RobustGains(rng.uniform(0.5, 2), rng.uniform(0.5, 3))
    p, v = rng.uniform(-1, 1, (2, 2))
    a_d = rng.standard_normal(2)
    tp = TargetPoint(rng.uniform(-1, 1, 2), rng.standard_normal(2), np.zeros(2), a_d)
    out = robust_filter(None, tp, AgentState(p, v), plant, gains)
    s = out.e_v
    M = plant.mass_matrix(p)
    vdot = plant.accel(p, v, out.u_bar)
    lam = gains.lambda_matrix(2)
    sdot = (vdot - a_d) + lam @ (v - tp.v)
    rate = 2 * s @ M @ sdot + s @ plant.mass_matrix_dot(p, v) @ s
    assert rate == pytest.approx(-2 * gains.k_r * s @ M @ s, rel=1e-8, abs=1e-10)
    assert (out.u - out.u_bar) @ s <= 1e-10 * (1 + np.abs(out.u).max())


def test_robust_general_zero_direction():
    plant = make_plant("nonlinear_example")
    tp = TargetPoint(np.zeros(2), np.zeros(2), np.array([0.3, 0.1]), np.zeros(2))
    out = robust_filter_general(None, tp, AgentState([0.0, 0.0], [0.0, 0.0]), plant, RobustGains(1.0, 1.0),
                                np.eye(2))
    assert np.allclose(out.u, tp.u)


def test_metric_is_spd_and_contracting():
    plant = make_plant("nonlinear_example")
    ev = metric_at(plant, np.array([0.3, -0.2]), np.array([0.5, 0.1]), np.array([0.0, 0.2]), 0.0,
                   FilterGains(1.0, 1.0))
    assert np.linalg.eigvalsh(ev.M)[0] > 0
    # Riccati margin Q = I leaves residual -1
    assert ev.contraction_residual == pytest.approx(-1.0, abs=1e-8)
