import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cart.barrier import eval_barrier, eval_h, safe_velocity
from cart.checks import random_observation
from cart.errors import ConfigError, NotSafe
from cart.world import AgentState, Observation, SafetyConfig, World, global_psi, observe

CFG = SafetyConfig(0.2, 0.05, 1.0, dim=2)


def test_h_endpoints():
    assert eval_h([0.25, 0.0], CFG) == pytest.approx(0.0, abs=1e-15)
    assert eval_h([0.0, 1.0], CFG) == pytest.approx(1.0)
    assert eval_h([0.625, 0.0], CFG) == pytest.approx(0.5)


def test_ellipsoidal_norm_weights_axes():
    cfg = SafetyConfig(0.2, 0.0, 1.0, xi=[1.0, 0.25])
    # |(0, 1)|_xi = 0.5
    assert eval_h([0.0, 1.0], cfg) == pytest.approx((0.5 - 0.2) / 0.8)


def test_config_invariants():
    with pytest.raises(ConfigError, match="r_sen"):
        SafetyConfig(0.5, 0.1, 0.55, dim=2)
    with pytest.raises(ConfigError):
        SafetyConfig(0.1, 0.0, 1.0, xi=[[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(ConfigError):
        SafetyConfig(0.1, 0.0, 1.0, xi=[2.0, 1.0])


def test_not_safe_inside_radius():
    obs = Observation(AgentState([0.0, 0.0], [0.0, 0.0]), (), ((0, np.array([0.2, 0.0])),))
    with pytest.raises(NotSafe):
        eval_barrier(obs, CFG)


def test_no_neighbors_gives_zero():
    obs = Observation(AgentState([0.0, 0.0], [1.0, 0.0]))
    ev = eval_barrier(obs, CFG)
    assert ev.psi == 0.0 and np.all(ev.grad_p == 0) and ev.min_h == np.inf


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31))
def test_psi_nonnegative_and_gradient_points_toward_danger(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    cfg = SafetyConfig(0.2, 0.0, 1.0, dim=n)
    obs = random_observation(rng, n, cfg, 1, 0)
    ev = eval_barrier(obs, cfg)
    assert ev.psi >= 0
    # moving along -grad increases clearance to the single neighbor
    step = -1e-4 * ev.grad_p / np.linalg.norm(ev.grad_p)
    q = obs.neighbor_agents[0][1].p
    assert eval_h(q - step, cfg) > eval_h(q, cfg)
    # v_d points away from the neighbor
    assert safe_velocity(obs, cfg, 1.0) @ q < 0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_psi_invariant_to_neighbor_order(seed):
    rng = np.random.default_rng(seed)
    obs = random_observation(rng, 2, CFG, 3, 2)
    rev = Observation(obs.self_state, obs.neighbor_agents[::-1], obs.neighbor_obstacles[::-1])
    a, b = eval_barrier(obs, CFG), eval_barrier(rev, CFG)
    assert a.psi == pytest.approx(b.psi, rel=1e-14)
    assert np.allclose(a.grad_p, b.grad_p, rtol=1e-13)


def test_observe_respects_sensing_radius():
    w = World.from_arrays([[0, 0], [0.9, 0], [1.1, 0]], np.zeros((3, 2)), obstacles=[[0, 0.5], [0, 3]])
    obs = observe(w, 0, CFG)
    assert [j for j, _ in obs.neighbor_agents] == [1]
    assert [j for j, _ in obs.neighbor_obstacles] == [0]


def test_global_psi_sums_pairs_once():
    w = World.from_arrays([[0, 0], [0.6, 0]], np.zeros((2, 2)))
    h = eval_h([0.6, 0.0], CFG)
    assert global_psi(w, CFG) == pytest.approx(-np.log(h))
