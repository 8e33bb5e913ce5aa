"""Per-agent log barrier, its position gradient and the safe target velocity.

For agent ``i`` with in-range objects ``j``::

    psi_i = -sum_j log h(p_ij),     p_ij = p_j - p_i
    v_d   = -k_p * grad_{p_i} psi_i

Everything here is analytic; finite differences only appear in the tests.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotSafe
from .world import Observation, SafetyConfig

H_FLOOR = 1e-9


def eval_h(p_ij, cfg: SafetyConfig) -> float:
    p_ij = np.asarray(p_ij, dtype=float)
    r = np.sqrt(p_ij @ cfg.xi @ p_ij)
    return float((r - cfg.inflated_radius) / cfg.span)


class DistanceClearance:
    """The affine-in-distance clearance ``h`` with ellipsoidal norm.

    Any object exposing ``value``, ``gradient`` and ``hessian`` with the same
    row-stacked conventions (derivatives taken with respect to ``p_ij``) can be
    handed to :func:`eval_barrier` in its place.
    """

    def __init__(self, cfg: SafetyConfig):
        self.xi = cfg.xi
        self.c = cfg.inflated_radius
        self.span = cfg.span

    def _norms(self, rel):
        w = rel @ self.xi
        r = np.sqrt(np.einsum("ki,ki->k", rel, w))
        return w, r

    def value(self, rel):
        _, r = self._norms(rel)
        return (r - self.c) / self.span

    def gradient(self, rel):
        w, r = self._norms(rel)
        return w / (r * self.span)[:, None]

    def hessian(self, rel):
        w, r = self._norms(rel)
        outer = np.einsum("ki,kj->kij", w, w)
        return (self.xi[None] / r[:, None, None] - outer / (r**3)[:, None, None]) / self.span


@dataclass
class BarrierEval:
    psi: float
    grad_p: np.ndarray
    h_values: list
    min_h: float


def _pair(cfg, pair):
    return DistanceClearance(cfg) if pair is None else pair


def eval_barrier(obs: Observation, cfg: SafetyConfig, pair=None) -> BarrierEval:
    """Evaluate ``psi_i`` and its gradient; raise :class:`NotSafe` below the floor."""
    pair = _pair(cfg, pair)
    n = obs.self_state.dim
    if obs.n_objects == 0:
        return BarrierEval(0.0, np.zeros(n), [], np.inf)
    rel = obs.relative_positions()
    h = pair.value(rel)
    keys = obs.object_keys()
    k = int(np.argmin(h))
    if not h[k] >= H_FLOOR:
        raise NotSafe(h[k], keys[k])
    # d/dp_i = -d/dp_ij, and -log flips the sign again
    grad = np.sum(pair.gradient(rel) / h[:, None], axis=0)
    psi = float(-np.sum(np.log(h)))
    return BarrierEval(psi, grad, list(zip(keys, h.tolist())), float(h[k]))


def safe_velocity(obs: Observation, cfg: SafetyConfig, k_p: float, pair=None) -> np.ndarray:
    return -k_p * eval_barrier(obs, cfg, pair).grad_p


def safe_velocity_time_derivative(obs: Observation, neighbor_velocities, cfg: SafetyConfig,
                                  k_p: float, pair=None) -> np.ndarray:
    """Time derivative of ``v_d`` along the current relative velocities.

    ``neighbor_velocities`` aligns with ``obs.neighbor_agents``; ``None``
    takes them from the observation.  Obstacles have zero velocity.
    """
    pair = _pair(cfg, pair)
    n = obs.self_state.dim
    if obs.n_objects == 0:
        return np.zeros(n)
    rel = obs.relative_positions()
    rel_v = obs.relative_velocities(neighbor_velocities)
    h = pair.value(rel)
    if not h.min() >= H_FLOOR:
        k = int(np.argmin(h))
        raise NotSafe(h[k], obs.object_keys()[k])
    g = pair.gradient(rel)
    H = pair.hessian(rel)
    # d/dt (grad h / h) = (H/h - g g^T/h^2) pdot_ij
    Hv = np.einsum("kij,kj->ki", H, rel_v)
    gv = np.einsum("ki,ki->k", g, rel_v)
    dgrad = np.sum(Hv / h[:, None] - g * (gv / h**2)[:, None], axis=0)
    return -k_p * dgrad


def barrier_terms(obs: Observation, cfg: SafetyConfig, k_p: float, pair=None, neighbor_velocities=None):
    """``(BarrierEval, v_d, vdot_d)`` in one pass; the filters need all three."""
    ev = eval_barrier(obs, cfg, pair)
    v_d = -k_p * ev.grad_p
    vdot_d = safe_velocity_time_derivative(obs, neighbor_velocities, cfg, k_p, pair)
    return ev, v_d, vdot_d
