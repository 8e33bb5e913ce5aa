"""Closed-form safety filter for Lagrangian agents.

The learned input is projected onto the halfspace ``(u - u_bar)^T e_v <= sigma``
where ``e_v = v - v_d`` and ``u_bar`` makes ``k_p psi + |e_v|_M^2 / 2``
decrease at rate ``k_p^2 |grad psi|^2 + k_v |e_v|_M^2`` when ``sigma = 0``.
A positive allowance ``sigma`` (see ``FilterGains.relaxation``) lets that
function grow at a bounded rate, so the barrier stays finite over any
finite horizon while agents far from others can still accelerate.
"""
from __future__ import annotations

import numpy as np

from .barrier import barrier_terms
from .gains import FilterGains
from .projection import SafetyFilterOutput, project_halfspace, qp_oracle_halfspace

__all__ = ["u_bar_lagrangian", "safety_filter_lagrangian", "qp_oracle_halfspace", "SafetyFilterOutput"]


def _u_bar(plant, obs, cfg, gains, neighbor_velocities, pair=None):
    p, v = obs.self_state.p, obs.self_state.v
    ev, v_d, vdot_d = barrier_terms(obs, cfg, gains.k_p, pair, neighbor_velocities)
    e_v = v - v_d
    M = plant.mass_matrix(p)
    if gains.u_bar_variant == "revised":
        cross = v_d
    else:
        cross = -gains.k_p * ev.grad_p
    u_bar = M @ vdot_d + plant.coriolis(p, v) @ v_d + plant.gravity(p) + plant.damping(p, v) + cross - gains.k_v * (M @ e_v)
    return u_bar, e_v, v_d, ev


def u_bar_lagrangian(plant, obs, neighbor_velocities, cfg, gains: FilterGains, pair=None) -> np.ndarray:
    return _u_bar(plant, obs, cfg, gains, neighbor_velocities, pair)[0]


def safety_filter_lagrangian(u_learned, plant, obs, neighbor_velocities, cfg, gains: FilterGains,
                             pair=None) -> SafetyFilterOutput:
    u_bar, e_v, _, ev = _u_bar(plant, obs, cfg, gains, neighbor_velocities, pair)
    slack = gains.allowance(ev.min_h)
    u, value, active = project_halfspace(u_learned, u_bar, e_v, slack)
    return SafetyFilterOutput(u, value, active, e_v, u_bar, e_v, True, slack)
