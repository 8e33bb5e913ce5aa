"""Safety filter for control-affine agents ``v_dot = f(p, v, t) + B(p, v, t) u``.

The projection direction is ``e_bar = B^T M e_v`` with ``M`` a contraction
metric.  Two choices of ``u_bar`` are available through
``FilterGains.general_variant``:

``damped`` (default)
    ``u_bar = e_bar c / |e_bar|^2 - R^-1 e_bar``; the extra damping cancels
    the ``e_bar^T R^-1 e_bar`` term the contraction inequality leaves over,
    so ``k_p psi + E`` decreases at rate ``k_p^2 |grad psi|^2 + k_v E``.
``printed``
    the rank-one term alone.

Here ``c = e_v^T M (v_dot_d - f(p, v_d, t)) - k_p e_v^T grad psi``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .barrier import barrier_terms
from .contraction import MetricEval, metric_at
from .gains import FilterGains
from .projection import SafetyFilterOutput, project_halfspace

FULL_ACTUATION_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class GeneralFilterContext:
    e_v_bar: np.ndarray
    u_bar: np.ndarray
    M: np.ndarray
    v_d: np.ndarray
    f_d: np.ndarray
    e_v: np.ndarray
    fully_actuated: bool
    min_h: float = np.inf


def is_fully_actuated(B, tol=FULL_ACTUATION_TOL) -> bool:
    """``B B^+ = I`` within ``tol``."""
    B = np.atleast_2d(B)
    return bool(np.abs(B @ np.linalg.pinv(B) - np.eye(B.shape[0])).max() <= tol)


def _metric_matrix(metric):
    if metric is None:
        return None
    return metric.M if isinstance(metric, MetricEval) else np.asarray(metric, dtype=float)


def general_context(plant, obs, neighbor_velocities, cfg, gains: FilterGains, metric=None,
                    pair=None) -> GeneralFilterContext:
    p, v, t = obs.self_state.p, obs.self_state.v, obs.time
    ev, v_d, vdot_d = barrier_terms(obs, cfg, gains.k_p, pair, neighbor_velocities)
    M = _metric_matrix(metric)
    if M is None:
        M = metric_at(plant, p, v, v_d, t, gains).M
    B = np.asarray(plant.actuation(p, v, t), dtype=float).reshape(plant.dim_state, -1)
    e_v = v - v_d
    Me = M @ e_v
    e_bar = B.T @ Me
    f_d = plant.drift(p, v_d, t)
    nrm2 = float(e_bar @ e_bar)
    if nrm2 != 0.0:
        c = float(Me @ (vdot_d - f_d)) - gains.k_p * float(e_v @ ev.grad_p)
        u_bar = e_bar * (c / nrm2)
        if gains.general_variant == "damped":
            u_bar = u_bar - np.linalg.solve(gains.R_for(B.shape[1]), e_bar)
    else:
        u_bar = np.zeros(B.shape[1])
    return GeneralFilterContext(e_bar, u_bar, M, v_d, f_d, e_v, is_fully_actuated(B), ev.min_h)


def u_bar_general(plant, obs, neighbor_velocities, cfg, gains: FilterGains, metric=None, pair=None) -> np.ndarray:
    return general_context(plant, obs, neighbor_velocities, cfg, gains, metric, pair).u_bar


def safety_filter_general(u_learned, plant, obs, neighbor_velocities, cfg, gains: FilterGains,
                          metric=None, pair=None) -> SafetyFilterOutput:
    ctx = general_context(plant, obs, neighbor_velocities, cfg, gains, metric, pair)
    slack = gains.allowance(ctx.min_h)
    u, value, active = project_halfspace(u_learned, ctx.u_bar, ctx.e_v_bar, slack)
    return SafetyFilterOutput(u, value, active, ctx.e_v, ctx.u_bar, ctx.e_v_bar, ctx.fully_actuated, slack)
