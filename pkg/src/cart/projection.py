"""The halfspace projection shared by every CaRT filter, and its KKT oracle."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class SafetyFilterOutput:
    u: np.ndarray
    constraint_value: float
    active: bool
    e_v: np.ndarray
    u_bar: np.ndarray
    normal: np.ndarray = None
    assumption_ok: bool = True
    slack: float = 0.0


def project_halfspace(u_learned, u_bar, normal, slack=0.0):
    """Return ``(u, constraint_value, active)`` for ``min |u - u_l|^2 s.t. (u - u_bar)^T normal <= slack``.

    ``constraint_value`` is ``(u_l - u_bar)^T normal``.  With ``slack >= 0`` the
    branch test fails whenever ``normal = 0``, so there is no division by zero.
    """
    u_learned = np.asarray(u_learned, dtype=float)
    normal = np.asarray(normal, dtype=float)
    value = float((u_learned - u_bar) @ normal)
    excess = value - slack
    if excess > 0:
        return u_learned - normal * (excess / float(normal @ normal)), value, True
    return u_learned.copy(), value, False


def qp_oracle_halfspace(u_learned, u_bar, normal, slack=0.0) -> np.ndarray:
    """Solve the same QP through its KKT system.

    Equality-constrained solve ``[[2I, n], [n^T, 0]] [u; mu] = [2 u_l; n^T u_bar + slack]``,
    kept only if the multiplier is nonnegative; otherwise the constraint is
    inactive and the minimizer is ``u_l``.
    """
    u_learned = np.asarray(u_learned, dtype=float)
    u_bar = np.asarray(u_bar, dtype=float)
    normal = np.asarray(normal, dtype=float)
    if np.dot(normal, u_learned) <= np.dot(normal, u_bar) + slack or not np.any(normal):
        return u_learned.copy()
    m = u_learned.size
    K = np.zeros((m + 1, m + 1))
    K[:m, :m] = 2.0 * np.eye(m)
    K[:m, m] = normal
    K[m, :m] = normal
    rhs = np.concatenate([2.0 * u_learned, [normal @ u_bar + slack]])
    sol = np.linalg.solve(K, rhs)
    if sol[m] < 0:
        return u_learned.copy()
    return sol[:m]
