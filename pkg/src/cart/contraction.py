"""Pointwise Riccati contraction metrics and the incremental energy.

The metric solves, at each query point,

    (A + k_v/2 I)^T M + M (A + k_v/2 I) - 2 M B R^-1 B^T M + Q = 0

so that ``M A + A^T M - 2 M B R^-1 B^T M + k_v M = -Q``.  The time derivative
of ``M`` is not bounded in advance; :func:`verify_contraction_along_trajectory`
measures how much of the ``Q`` margin it consumes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_continuous_are

from .dynamics import sdc_factorize
from .errors import RiccatiFailure
from .gains import FilterGains


@dataclass(frozen=True, eq=False)
class MetricEval:
    M: np.ndarray
    M_dot: np.ndarray
    contraction_residual: float
    A: np.ndarray = None
    B: np.ndarray = None


def metric_pointwise(A_d, B, R, k_v, Q, state=None, care_tol=1e-8) -> np.ndarray:
    A_d = np.atleast_2d(np.asarray(A_d, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A_d.shape[0], -1)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    n = A_d.shape[0]
    A_shift = A_d + 0.5 * k_v * np.eye(n)
    try:
        M = solve_continuous_are(A_shift, B, Q, 0.5 * R)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise RiccatiFailure(f"Riccati solve failed: {exc}", state) from None
    if not np.all(np.isfinite(M)):
        raise RiccatiFailure("Riccati solution is not finite", state)
    M = 0.5 * (M + M.T)
    gain = 2.0 * np.linalg.solve(R, B.T @ M)
    resid = A_shift.T @ M + M @ A_shift - M @ B @ gain + Q
    scale = max(1.0, np.abs(M).max(), np.abs(Q).max())
    if np.abs(resid).max() > care_tol * scale * max(1.0, np.abs(A_shift).max()):
        raise RiccatiFailure(f"Riccati residual {np.abs(resid).max():.3e} too large", state)
    if np.linalg.eigvalsh(M)[0] <= 0:
        raise RiccatiFailure("Riccati solution is not positive definite", state)
    if np.linalg.eigvals(A_shift - B @ gain).real.max() >= 0:
        raise RiccatiFailure("Riccati solution is not stabilizing", state)
    return M


def contraction_lhs(M, M_dot, A, B, R, k_v) -> np.ndarray:
    """``M_dot + M A + A^T M - 2 M B R^-1 B^T M + k_v M``, symmetrized."""
    BtM = B.T @ M
    L = M_dot + M @ A + A.T @ M - 2.0 * BtM.T @ np.linalg.solve(R, BtM) + k_v * M
    return 0.5 * (L + L.T)


def max_eig(S) -> float:
    return float(np.linalg.eigvalsh(S)[-1])


def incremental_energy(v, v_d, M) -> float:
    e = np.asarray(v, dtype=float) - np.asarray(v_d, dtype=float)
    return 0.5 * float(e @ M @ e)


def metric_at(plant, p, v, v_ref, t, gains: FilterGains) -> MetricEval:
    """CARE metric at one state, with ``M_dot`` left at zero."""
    A = sdc_factorize(plant, p, v, v_ref, t)
    B = np.asarray(plant.actuation(p, v, t), dtype=float).reshape(plant.dim_state, -1)
    R = gains.R_for(B.shape[1])
    M = metric_pointwise(A, B, R, gains.k_v, gains.Q_for(plant.dim_state), state=(tuple(p), tuple(v)))
    if np.linalg.eigvalsh(M)[0] < gains.m_floor:
        raise RiccatiFailure("metric below the eigenvalue floor", (tuple(p), tuple(v)))
    zero = np.zeros_like(M)
    return MetricEval(M, zero, max_eig(contraction_lhs(M, zero, A, B, R, gains.k_v)), A, B)


def verify_contraction_along_trajectory(trajectory, plant, gains: FilterGains) -> float:
    """Worst contraction residual along a sampled trajectory.

    ``trajectory`` maps ``t``, ``p``, ``v`` and ``v_ref`` to stacked arrays
    (``v_ref`` is the velocity the metric contracts toward, usually ``v_d``).
    ``M_dot`` comes from central differences of the pointwise metric in time,
    one-sided at the ends.
    """
    t = np.asarray(trajectory["t"], dtype=float)
    P, V, Vr = (np.asarray(trajectory[k], dtype=float) for k in ("p", "v", "v_ref"))
    evals = [metric_at(plant, P[k], V[k], Vr[k], t[k], gains) for k in range(t.size)]
    Ms = np.array([e.M for e in evals])
    if t.size > 1:
        M_dot = np.gradient(Ms, t, axis=0)
    else:
        M_dot = np.zeros_like(Ms)
    worst = -np.inf
    for k, ev in enumerate(evals):
        R = gains.R_for(ev.B.shape[1])
        worst = max(worst, max_eig(contraction_lhs(ev.M, M_dot[k], ev.A, ev.B, R, gains.k_v)))
    return float(worst)
