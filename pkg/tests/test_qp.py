import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cart.errors import QPInfeasible
from cart.qp import kkt_residuals, solve_qp, solve_qp_enumerate


def _problem(seed, n, q):
    rng = np.random.default_rng(seed)
    L = rng.standard_normal((n, n))
    H = L @ L.T + n * np.eye(n)
    g = rng.standard_normal(n)
    A = rng.standard_normal((q, n))
    x_feas = rng.standard_normal(n)
    b = A @ x_feas + rng.uniform(0, 1, q)
    return H, g, A, b


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 5), st.integers(0, 6))
def test_active_set_matches_enumeration(seed, n, q):
    H, g, A, b = _problem(seed, n, q)
    fast = solve_qp(H, g, A, b)
    ref = solve_qp_enumerate(H, g, A, b)
    assert np.allclose(fast.x, ref.x, atol=1e-8)
    stat, comp, viol, lam_min = kkt_residuals(H, g, A, b, fast)
    assert stat < 1e-8 and comp < 1e-8 and viol < 1e-8 and lam_min >= 0


def test_unconstrained_minimizer():
    H = np.diag([2.0, 4.0])
    sol = solve_qp(H, np.array([-2.0, -4.0]))
    assert np.allclose(sol.x, [1.0, 1.0])


def test_single_halfspace_projection():
    # min |x - (2, 0)|^2 s.t. x0 <= 1
    sol = solve_qp(2 * np.eye(2), np.array([-4.0, 0.0]), np.array([[1.0, 0.0]]), np.array([1.0]))
    assert np.allclose(sol.x, [1.0, 0.0])
    assert sol.active == (0,)
    assert sol.multipliers[0] == pytest.approx(2.0)


def test_infeasible_detected():
    A = np.array([[1.0], [-1.0]])
    b = np.array([-1.0, -1.0])  # x <= -1 and x >= 1
    with pytest.raises(QPInfeasible):
        solve_qp(np.eye(1), np.zeros(1), A, b)
    with pytest.raises(QPInfeasible):
        solve_qp_enumerate(np.eye(1), np.zeros(1), A, b)
