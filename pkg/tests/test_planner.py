import numpy as np
import pytest

from cart.baselines import global_reference_policy, minimum_energy_double_integrator
from cart.dynamics import make_plant
from cart.world import SafetyConfig, pairwise_clearance

CFG = SafetyConfig(0.1, 0.0, 0.5, dim=2)


@pytest.mark.parametrize("goal,T", [([1.5, 0.5], 4.0), ([0.0, -2.0], 5.0), ([0.3, 0.3], 2.0)])
def test_free_transfer_matches_minimum_energy(goal, T):
    plan = global_reference_policy(make_plant("double_integrator"), [[0, 0]], [[0, 0]], [goal], T, 0.1, CFG,
                                   ticks_per_knot=1)
    oracle = minimum_energy_double_integrator(np.linalg.norm(goal), T)
    # piecewise-constant inputs can only cost more than the continuous optimum
    assert oracle <= plan.cost <= 1.01 * oracle
    assert np.allclose(plan.p[0, -1], goal, atol=1e-8)
    assert np.allclose(plan.v[0, -1], 0.0, atol=1e-8)


def test_swap_keeps_clearance():
    P0 = np.array([[0.0, 0.0], [2.0, 0.05]])
    G = np.array([[2.0, 0.0], [0.0, 0.05]])
    plan = global_reference_policy(make_plant("double_integrator"), P0, np.zeros_like(P0), G, 6.0, 0.1, CFG)
    worst = min(pairwise_clearance(plan.p[:, k], np.zeros((0, 2)), CFG.r_s, CFG.r_sen, CFG.xi)
                for k in range(plan.p.shape[1]))
    assert worst > 0
    assert np.allclose(plan.p[:, -1], G, atol=1e-6)
    assert plan.cost > minimum_energy_double_integrator(2.0, 6.0) * 2
