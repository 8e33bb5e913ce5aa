"""Robust tracking of a certified safe target trajectory.

Composite error ``s = (v - v_d(t)) + Lambda (p - p_d(t))``.  With reference
velocity ``v_r = v_d - Lambda (p - p_d)`` and ``v_r_dot = a_d - Lambda (v - v_d)``,
the Lagrangian target input is

    u_bar_r = M v_r_dot + C v_r + G + D - k_r M s

which gives ``d/dt (s^T M s) = -2 k_r s^T M s`` when applied exactly.  The
target input ``u_d(t)`` is projected onto ``(u - u_bar_r)^T s <= 0``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GainTooSmall
from .gains import RobustGains
from .projection import SafetyFilterOutput, project_halfspace

__all__ = [
    "SafeTargetTrajectory", "TargetPoint", "RobustGains", "robust_filter", "robust_filter_general",
    "PlantBounds", "ErrorEnvelope", "error_envelope", "margin_from_envelope", "estimate_plant_bounds",
]


@dataclass(frozen=True, eq=False)
class TargetPoint:
    p: np.ndarray
    v: np.ndarray
    u: np.ndarray
    a: np.ndarray


@dataclass(frozen=True, eq=False)
class SafeTargetTrajectory:
    """Dense target samples; ``p``/``v`` interpolate linearly, ``u``/``a`` are held."""

    times: np.ndarray
    p_d: np.ndarray
    v_d: np.ndarray
    u_d: np.ndarray
    a_d: np.ndarray
    min_h: np.ndarray = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 1 or np.any(np.diff(t) <= 0):
            raise ConfigError("SafeTargetTrajectory.times", "must be strictly increasing")
        for name in ("p_d", "v_d", "u_d", "a_d"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape[0] != t.size:
                raise ConfigError(f"SafeTargetTrajectory.{name}", "length must match times")
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "times", t)

    @property
    def t0(self):
        return self.times[0]

    @property
    def t1(self):
        return self.times[-1]

    def at(self, t, tol=1e-9) -> TargetPoint:
        ts = self.times
        if t < ts[0] - tol or t > ts[-1] + tol:
            raise ValueError(f"time {t} outside target domain [{ts[0]}, {ts[-1]}]")
        t = min(max(t, ts[0]), ts[-1])
        k = int(np.searchsorted(ts, t, side="right")) - 1
        k = min(max(k, 0), ts.size - 1)
        if abs(t - ts[k]) <= tol or k == ts.size - 1:
            return TargetPoint(self.p_d[k], self.v_d[k], self.u_d[k], self.a_d[k])
        if k + 1 < ts.size and abs(ts[k + 1] - t) <= tol:
            k += 1
            return TargetPoint(self.p_d[k], self.v_d[k], self.u_d[k], self.a_d[k])
        w = (t - ts[k]) / (ts[k + 1] - ts[k])
        p = (1 - w) * self.p_d[k] + w * self.p_d[k + 1]
        v = (1 - w) * self.v_d[k] + w * self.v_d[k + 1]
        return TargetPoint(p, v, self.u_d[k], self.a_d[k])


def _reference(target: TargetPoint, state, gains: RobustGains):
    n = state.p.size
    lam = gains.lambda_matrix(n)
    e_p = state.p - target.p
    e_v = state.v - target.v
    s = e_v + lam @ e_p
    v_r = target.v - lam @ e_p
    vdot_r = target.a - lam @ e_v
    return s, v_r, vdot_r


def robust_filter(u_target, target: TargetPoint, state, plant, gains: RobustGains) -> SafetyFilterOutput:
    """Lagrangian robust filter; ``u_target`` defaults to the held target input."""
    u_target = target.u if u_target is None else u_target
    s, v_r, vdot_r = _reference(target, state, gains)
    p, v = state.p, state.v
    M = plant.mass_matrix(p)
    u_bar = M @ vdot_r + plant.coriolis(p, v) @ v_r + plant.gravity(p) + plant.damping(p, v) - gains.k_r * (M @ s)
    u, value, active = project_halfspace(u_target, u_bar, s)
    return SafetyFilterOutput(u, value, active, s, u_bar, s)


def robust_filter_general(u_target, target: TargetPoint, state, plant, gains: RobustGains, metric,
                          t=0.0, R_inv=None) -> SafetyFilterOutput:
    """Control-affine analogue with direction ``s_bar = B^T M s``.

    ``u_bar_r = s_bar (s^T M (v_r_dot - f(p, v_r, t)) - k_r s^T M s) / |s_bar|^2``,
    zero when ``s_bar = 0``.  Passing ``R_inv`` subtracts ``R_inv s_bar``,
    which absorbs the actuation term of the contraction inequality.
    """
    u_target = target.u if u_target is None else u_target
    M = metric.M if hasattr(metric, "M") else np.asarray(metric, dtype=float)
    s, v_r, vdot_r = _reference(target, state, gains)
    p, v = state.p, state.v
    B = np.asarray(plant.actuation(p, v, t), dtype=float).reshape(plant.dim_state, -1)
    Ms = M @ s
    s_bar = B.T @ Ms
    nrm2 = float(s_bar @ s_bar)
    if nrm2 != 0.0:
        c = float(Ms @ (vdot_r - plant.drift(p, v_r, t))) - gains.k_r * float(s @ Ms)
        u_bar = s_bar * (c / nrm2)
        if R_inv is not None:
            u_bar = u_bar - R_inv @ s_bar
    else:
        u_bar = np.zeros(B.shape[1])
    u, value, active = project_halfspace(u_target, u_bar, s_bar)
    return SafetyFilterOutput(u, value, active, s, u_bar, s_bar)


# --- stochastic error envelope -------------------------------------------------

@dataclass(frozen=True)
class PlantBounds:
    """``m_lower I <= M <= m_upper I``, ``|M^-1 Gamma|_F^2 <= d_s_bar`` and metric-derivative bounds."""

    m_lower: float
    m_upper: float
    d_s_bar: float = 0.0
    m_x_bar: float = 0.0
    m_x2_bar: float = 0.0

    def __post_init__(self):
        if not (0 < self.m_lower <= self.m_upper < np.inf):
            raise ConfigError("plant_bounds", f"need 0 < m_lower <= m_upper < inf, got {self.m_lower}, {self.m_upper}")
        for name in ("d_s_bar", "m_x_bar", "m_x2_bar"):
            val = getattr(self, name)
            if not (0 <= val < np.inf):
                raise ConfigError(f"plant_bounds.{name}", f"must be finite and >= 0, got {val}")


@dataclass(frozen=True, eq=False)
class ErrorEnvelope:
    a: float
    b: float
    k_r_bar: float
    C_d: float
    lambda_min: float
    initial_error: float
    D_s: float = None

    def mean_s_bound(self, t):
        """Bound on the mean composite error, ``a + b exp(-k_r_bar t)``."""
        return self.a + self.b * np.exp(-self.k_r_bar * np.asarray(t, dtype=float))

    def position_bound(self, t):
        """``D_E(t)``: first-moment bound on the position tracking error."""
        t = np.asarray(t, dtype=float)
        lam, k = self.lambda_min, self.k_r_bar
        el = np.exp(-lam * t)
        out = self.initial_error * el + self.a * (1.0 - el) / lam
        if abs(lam - k) <= 1e-12 * max(lam, k):
            out = out + self.b * t * el
        else:
            out = out + self.b * (np.exp(-k * t) - el) / (lam - k)
        return out

    def probability_floor(self, t, D_s=None):
        D_s = self.D_s if D_s is None else D_s
        if D_s is None:
            raise ValueError("no margin D_s chosen")
        D = self.position_bound(t)
        if D_s == 0:
            return np.where(D == 0, 1.0, 0.0)
        return np.maximum(0.0, 1.0 - D / D_s)

    def with_margin(self, D_s) -> "ErrorEnvelope":
        return ErrorEnvelope(self.a, self.b, self.k_r_bar, self.C_d, self.lambda_min, self.initial_error, float(D_s))


def error_envelope(gains: RobustGains, bounds: PlantBounds, disturbance, initial_error: float = 0.0,
                   initial_s: float = None, dim: int = 1) -> ErrorEnvelope:
    """Constants of the stochastic tracking-error bound.

    ``initial_error`` is the initial position error magnitude; ``initial_s``
    the initial composite error magnitude, which defaults to
    ``|Lambda| * initial_error`` (no initial velocity error).
    ``d_s_bar`` is taken from ``bounds`` when nonzero, else from
    ``disturbance.gamma_bar**2 / m_lower**2``.
    """
    m_lo, m_hi = bounds.m_lower, bounds.m_upper
    d_bar = float(disturbance.d_bar)
    d_s = bounds.d_s_bar if bounds.d_s_bar > 0 else float(disturbance.gamma_bar) ** 2 / m_lo**2
    eps = gains.epsilon_d
    lam = gains.lambda_matrix(dim)
    eig = np.linalg.eigvalsh(lam)
    C_d = (d_s * m_hi + eps * (d_bar + d_s * bounds.m_x_bar)) / m_lo
    k_bar = 0.5 * (gains.k_r - ((d_bar + d_s * bounds.m_x_bar) / eps + d_s * bounds.m_x2_bar / 2.0) / m_lo)
    if not k_bar > 0:
        raise GainTooSmall(
            f"k_r = {gains.k_r} leaves no positive decay rate (k_r_bar = {k_bar:.4g}); "
            "increase k_r or adjust epsilon_d")
    if initial_s is None:
        initial_s = float(eig[-1]) * float(initial_error)
    a = np.sqrt(C_d / (2.0 * k_bar))
    V0 = m_hi * float(initial_s) ** 2
    b = np.sqrt(max(0.0, V0 - C_d / (2.0 * k_bar)))
    return ErrorEnvelope(float(a), float(b), float(k_bar), float(C_d), float(eig[0]), float(initial_error))


def margin_from_envelope(envelope: ErrorEnvelope, target_probability: float, horizon: float,
                         n_grid: int = 2001) -> float:
    """Smallest ``D_s`` with ``1 - sup_{t <= horizon} D_E(t) / D_s >= target_probability``."""
    if not 0 < target_probability < 1:
        raise ValueError(f"target_probability must lie in (0, 1), got {target_probability}")
    t = np.linspace(0.0, float(horizon), n_grid)
    sup = float(np.max(envelope.position_bound(t)))
    return sup / (1.0 - target_probability)


def estimate_plant_bounds(plant, box, disturbance=None, n_samples=10_000, seed=0, safety_factor=1.2,
                          fd_step=1e-4) -> PlantBounds:
    """Sample ``M`` and its position derivatives over a state box.

    ``box`` is ``(low, high)`` for the position.  Constant-mass plants skip
    the sampling and use exact values.
    """
    gamma = 0.0 if disturbance is None else float(disturbance.gamma_bar)
    n = plant.dim
    low, high = (np.broadcast_to(np.asarray(b, dtype=float), (n,)) for b in box)
    if getattr(plant, "constant_mass", False):
        M = plant.mass_matrix(np.zeros(n))
        eig = np.linalg.eigvalsh(M)
        Minv = np.linalg.inv(M)
        d_s = float(np.linalg.norm(Minv * (gamma / np.sqrt(n)), "fro") ** 2)
        return PlantBounds(float(eig[0]), float(eig[-1]), d_s, 0.0, 0.0)
    rng = np.random.default_rng(seed)
    lo, hi, dss, mx, mx2 = np.inf, 0.0, 0.0, 0.0, 0.0
    h = fd_step
    eye = np.eye(n)
    for p in rng.uniform(low, high, size=(n_samples, n)):
        M = plant.mass_matrix(p)
        eig = np.linalg.eigvalsh(M)
        lo, hi = min(lo, eig[0]), max(hi, eig[-1])
        Minv = np.linalg.inv(M)
        dss = max(dss, float(np.linalg.norm(Minv * (gamma / np.sqrt(n)), "fro") ** 2))
        for k in range(n):
            Mp, Mm = plant.mass_matrix(p + h * eye[k]), plant.mass_matrix(p - h * eye[k])
            mx = max(mx, np.linalg.norm((Mp - Mm) / (2 * h), 2))
            for l in range(k, n):
                d2 = (plant.mass_matrix(p + h * eye[k] + h * eye[l]) - plant.mass_matrix(p + h * eye[k] - h * eye[l])
                      - plant.mass_matrix(p - h * eye[k] + h * eye[l]) + plant.mass_matrix(p - h * eye[k] - h * eye[l])) / (4 * h * h)
                mx2 = max(mx2, np.linalg.norm(d2, 2))
    f = safety_factor
    return PlantBounds(float(lo / f), float(hi * f), float(dss * f), float(mx * f), float(mx2 * f))
