"""Comparison policies: emulated learned policy, CLF-CBF QP and a global planner."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .barrier import DistanceClearance, H_FLOOR
from .dynamics import discrete_lti, hold_input, inverse_dynamics, propagate
from .errors import ConfigError, NotSafe, PlannerFailure, QPInfeasible
from .qp import solve_qp
from .world import pairwise_clearance, xi_norm

log = logging.getLogger(__name__)

POLICY_KINDS = ("learned_emulated", "clf_cbf_qp", "cart_safety_only", "cart_full", "global_reference")


@dataclass(frozen=True)
class QPParams:
    alpha_h: float = 1.0
    alpha_V: float = 1.0
    rho_weight: float = 1e3
    input_box_limit: float = 1.0
    mu: float = 1.0
    lambda_clf: float = 1.0

    def __post_init__(self):
        for name in ("alpha_h", "alpha_V", "rho_weight", "input_box_limit", "mu", "lambda_clf"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"policy.qp.{name}", f"must be > 0, got {getattr(self, name)}")


@dataclass(frozen=True)
class PolicySpec:
    kind: str = "cart_safety_only"
    error_magnitude: float = 0.0
    qp_params: QPParams = field(default_factory=QPParams)
    reference: str = "plan"
    tracking_kp: float = 1.0
    tracking_kd: float = 2.0
    perturbation_frequency: float = 0.2
    replan_period: int = 10
    target_window: int = 20
    error_taper: float = 0.0

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ConfigError("policy.kind", f"must be one of {POLICY_KINDS}, got {self.kind!r}")
        if not (np.isfinite(self.error_magnitude) and self.error_magnitude >= 0):
            raise ConfigError("policy.error_magnitude", f"must be finite and >= 0, got {self.error_magnitude}")
        if self.reference not in ("plan", "goal"):
            raise ConfigError("policy.reference", "must be 'plan' or 'goal'")
        if self.replan_period < 1:
            raise ConfigError("policy.replan_period", "must be >= 1")
        if not self.error_taper >= 0:
            raise ConfigError("policy.error_taper", "must be >= 0")
        if self.target_window < self.replan_period:
            raise ConfigError("policy.target_window", "must be >= policy.replan_period")


# --- learned policy ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Reference:
    """Per-agent reference: sampled plan ``(t, p, v, a)`` or a fixed goal."""

    goal: np.ndarray
    times: np.ndarray = None
    p: np.ndarray = None
    v: np.ndarray = None
    a: np.ndarray = None

    def at(self, t):
        if self.times is None or t >= self.times[-1]:
            zero = np.zeros_like(self.goal)
            return self.goal, zero, zero
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        k = max(k, 0)
        w = (t - self.times[k]) / (self.times[k + 1] - self.times[k])
        return ((1 - w) * self.p[k] + w * self.p[k + 1], (1 - w) * self.v[k] + w * self.v[k + 1], self.a[k])


class Perturbation:
    """Smooth seeded perturbation with Euclidean norm at most ``magnitude``."""

    def __init__(self, magnitude, dim, seed, agent=0, frequency=0.2, n_modes=3):
        rng = np.random.default_rng([*np.atleast_1d(seed).astype(int).tolist(), int(agent), 104729])
        dirs = rng.standard_normal((n_modes, dim))
        self.dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
        self.omega = 2 * np.pi * frequency * rng.uniform(0.5, 1.5, n_modes)
        self.phase = rng.uniform(0, 2 * np.pi, n_modes)
        self.scale = float(magnitude) / n_modes

    def __call__(self, t) -> np.ndarray:
        return self.scale * (np.sin(self.omega * t + self.phase) @ self.dirs)


def learned_policy_emulated(obs, plant, reference: Reference, error_magnitude=0.0, seed=0, spec: PolicySpec = None,
                            perturbation: Perturbation = None) -> np.ndarray:
    """Stand-in for a trained policy: PD tracking of the reference plus a bounded smooth error.

    Uses only the agent's own state from the observation.  With
    ``spec.error_taper > 0`` the error fades linearly inside that distance
    of the goal, so the emulated policy still settles there.
    """
    spec = PolicySpec() if spec is None else spec
    p, v, t = obs.self_state.p, obs.self_state.v, obs.time
    p_r, v_r, a_r = reference.at(t)
    a_cmd = a_r + spec.tracking_kd * (v_r - v) + spec.tracking_kp * (p_r - p)
    u = inverse_dynamics(plant, p, v, a_cmd, t)
    if error_magnitude > 0:
        if perturbation is None:
            perturbation = Perturbation(error_magnitude, u.size, seed, obs.self_index, spec.perturbation_frequency)
        scale = 1.0
        if spec.error_taper > 0:
            scale = min(1.0, float(np.linalg.norm(p - reference.goal)) / spec.error_taper)
        u = u + scale * perturbation(t)
    return u


# --- CLF-CBF QP ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class QPPolicyResult:
    u: np.ndarray
    rho: float
    fallback: bool
    n_cbf: int


def _drift_and_gain(plant, p, v, t):
    """``(a0, B)`` with acceleration ``a0 + B u``."""
    if plant.kind == "lagrangian":
        M = plant.mass_matrix(p)
        Minv = np.linalg.inv(M)
        return -Minv @ plant.bias(p, v), Minv, M
    B = np.asarray(plant.actuation(p, v, t), dtype=float).reshape(plant.dim_state, -1)
    return plant.drift(p, v, t), B, np.eye(plant.dim_state)


def clf_cbf_rows(obs, plant, cfg, learned_point, qp: QPParams, neighbor_velocities=None):
    """Constraint rows ``A [u; rho] <= b`` for the CBF pairs and the relaxed CLF."""
    p, v, t = obs.self_state.p, obs.self_state.v, obs.time
    a0, B, M = _drift_and_gain(plant, p, v, t)
    m = B.shape[1]
    rows, rhs = [], []
    if obs.n_objects:
        pair = DistanceClearance(cfg)
        rel = obs.relative_positions()
        rel_v = obs.relative_velocities(neighbor_velocities)
        h = pair.value(rel)
        if h.min() < H_FLOOR:
            k = int(np.argmin(h))
            raise NotSafe(h[k], obs.object_keys()[k])
        g = pair.gradient(rel)
        Hs = pair.hessian(rel)
        hdot = np.einsum("ki,ki->k", g, rel_v)
        curv = np.einsum("ki,kij,kj->k", rel_v, Hs, rel_v)
        al, mu = qp.alpha_h, qp.mu
        # h_ddot = curv - g^T (a0 + B u), neighbors assumed unaccelerated
        for k in range(h.size):
            rows.append(np.append(g[k] @ B, 0.0))
            rhs.append(curv[k] - g[k] @ a0 + (mu + al) * hdot[k] + al * mu * h[k])
    n_cbf = len(rows)
    if learned_point is not None:
        p_l, v_l, a_l = learned_point
        lam = qp.lambda_clf
        e_v = v - v_l
        s = e_v + lam * (p - p_l)
        Ms = M @ s
        V = float(s @ Ms)
        rows.append(np.append(2.0 * (Ms @ B), -1.0))
        rhs.append(-qp.alpha_V * V - 2.0 * float(Ms @ (a0 - a_l + lam * e_v)))
    A = np.array(rows).reshape(-1, m + 1)
    return A, np.array(rhs), n_cbf


def clf_cbf_qp_policy(obs, plant, cfg, learned_input, learned_point, qp: QPParams,
                      neighbor_velocities=None) -> QPPolicyResult:
    """``min |u - u_l|^2 + w rho^2`` subject to CBF rows, the relaxed CLF row and ``|u_k| <= limit``.

    If the CBF rows conflict with the box the box is dropped and the
    solution clipped afterwards; that event is logged and flagged.
    """
    u_l = np.asarray(learned_input, dtype=float)
    m = u_l.size
    A, b, n_cbf = clf_cbf_rows(obs, plant, cfg, learned_point, qp, neighbor_velocities)
    H = 2.0 * np.diag(np.append(np.ones(m), qp.rho_weight))
    g = np.append(-2.0 * u_l, 0.0)
    lim = qp.input_box_limit
    box = np.zeros((2 * m, m + 1))
    box[:m, :m] = np.eye(m)
    box[m:, :m] = -np.eye(m)
    A_full = np.vstack([A, box])
    b_full = np.concatenate([b, np.full(2 * m, lim)])
    try:
        sol = solve_qp(H, g, A_full, b_full)
        return QPPolicyResult(sol.x[:m], float(sol.x[m]), False, n_cbf)
    except QPInfeasible:
        log.warning("CLF-CBF QP infeasible with input box at t=%.3f (agent %d); clipping", obs.time, obs.self_index)
    try:
        sol = solve_qp(H, g, A, b)
        u = sol.x[:m]
        rho = float(sol.x[m])
    except QPInfeasible:
        u, rho = u_l, 0.0
    return QPPolicyResult(np.clip(u, -lim, lim), rho, True, n_cbf)


# --- global planner ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GlobalPlan:
    """Open-loop plan sampled at the control period.

    ``p``/``v`` have shape ``(N, K+1, n)``; ``u`` and ``a`` have ``(N, K, m)``
    and ``(N, K, n)``.  After the last tick the hold input keeps each agent at
    its goal.
    """

    times: np.ndarray
    p: np.ndarray
    v: np.ndarray
    u: np.ndarray
    a: np.ndarray
    hold: np.ndarray
    cost: float
    min_clearance: float
    iterations: int

    def input_at(self, agent, tick):
        if tick < self.u.shape[1]:
            return self.u[agent, tick]
        return self.hold[agent]

    def reference(self, agent, goal) -> Reference:
        return Reference(np.asarray(goal, dtype=float), self.times, self.p[agent], self.v[agent],
                         self.a[agent])


def _rollout_agent(plant, p0, v0, U, dt, substeps, ticks_per_knot):
    K = U.shape[0] * ticks_per_knot
    P = np.empty((K + 1, p0.size))
    V = np.empty((K + 1, p0.size))
    P[0], V[0] = p0, v0
    for k in range(K):
        P[k + 1], V[k + 1] = propagate(plant, P[k], V[k], U[k // ticks_per_knot], dt, substeps)
    return P, V


def _linear_maps(plant, dt, substeps, n_ticks, ticks_per_knot, m):
    """For LTI plants: stacked maps ``x_k = F_k x0 + L_k U + c_k`` for all ticks."""
    Phi, Gam, c = discrete_lti(plant, dt, substeps)
    nx = Phi.shape[0]
    n_knots = n_ticks // ticks_per_knot
    F = np.empty((n_ticks + 1, nx, nx))
    L = np.zeros((n_ticks + 1, nx, n_knots * m))
    C = np.zeros((n_ticks + 1, nx))
    F[0] = np.eye(nx)
    for k in range(n_ticks):
        F[k + 1] = Phi @ F[k]
        L[k + 1] = Phi @ L[k]
        j = k // ticks_per_knot
        L[k + 1][:, j * m:(j + 1) * m] += Gam
        C[k + 1] = Phi @ C[k] + c
    return F, L, C


def global_reference_policy(plant, P0, V0, goals, horizon, dt, cfg, obstacles=None, substeps=10,
                            ticks_per_knot=None, clearance_buffer=0.1, max_iter=60, seed=0,
                            penalty_weights=(1e1, 1e2, 1e3, 1e4, 1e5)) -> GlobalPlan:
    """Minimum-effort, collision-free transfer to rest at ``goals``.

    Multiple shooting over piecewise-constant knots, condensed onto the
    knot inputs (exact linear sensitivities for LTI plants, finite
    differences otherwise).  Each Gauss-Newton step solves the terminal
    conditions exactly and treats pairwise clearance below
    ``(r_s + delta_r_s) * (1 + clearance_buffer)`` as a quadratic penalty
    whose weight is raised in stages.
    """
    P0 = np.atleast_2d(np.asarray(P0, dtype=float))
    V0 = np.atleast_2d(np.asarray(V0, dtype=float))
    goals = np.atleast_2d(np.asarray(goals, dtype=float))
    N, n = P0.shape
    m = plant.dim_input
    n_ticks = int(round(horizon / dt))
    if n_ticks < 1:
        raise ConfigError("planner.horizon", "must cover at least one control tick")
    if ticks_per_knot is None:
        ticks_per_knot = max(1, n_ticks // 20)
    if n_ticks % ticks_per_knot:
        raise ConfigError("planner.ticks_per_knot", "must divide the number of ticks")
    n_knots = n_ticks // ticks_per_knot
    obstacles = np.zeros((0, n)) if obstacles is None else np.asarray(obstacles, dtype=float).reshape(-1, n)
    xi = cfg.xi
    d_safe = cfg.inflated_radius * (1.0 + clearance_buffer)
    nu = n_knots * m
    nz = N * nu

    lti = bool(getattr(plant, "is_lti", False))
    if lti:
        F, L, C = _linear_maps(plant, dt, substeps, n_ticks, ticks_per_knot, m)
        Lp = L[:, :n, :]

    def states(U):
        X = np.empty((N, n_ticks + 1, 2 * n))
        for i in range(N):
            if lti:
                x0 = np.concatenate([P0[i], V0[i]])
                X[i] = np.einsum("kab,b->ka", F, x0) + np.einsum("kab,b->ka", L, U[i]) + C
            else:
                Pp, Vv = _rollout_agent(plant, P0[i], V0[i], U[i].reshape(n_knots, m), dt, substeps, ticks_per_knot)
                X[i] = np.hstack([Pp, Vv])
        return X

    def sensitivities(U, X):
        """Per-agent d(positions)/dU, shape (N, K+1, n, nu), and d(terminal)/dU."""
        if lti:
            return np.broadcast_to(Lp, (N,) + Lp.shape), np.broadcast_to(L[-1], (N,) + L[-1].shape)
        Sp = np.empty((N, n_ticks + 1, n, nu))
        St = np.empty((N, 2 * n, nu))
        eps = 1e-6
        for i in range(N):
            for k in range(nu):
                Ui = U[i].copy()
                Ui[k] += eps
                Pp, Vv = _rollout_agent(plant, P0[i], V0[i], Ui.reshape(n_knots, m), dt, substeps, ticks_per_knot)
                Sp[i, :, :, k] = (Pp - X[i, :, :n]) / eps
                St[i, :, k] = (np.concatenate([Pp[-1], Vv[-1]]) - X[i, -1]) / eps
        return Sp, St

    x_goal = np.hstack([goals, np.zeros_like(goals)])
    iu = np.triu_indices(N, 1)

    def closest(R0, R1):
        """Closest approach of linearly interpolated relative positions per interval."""
        D = R1 - R0
        a = np.einsum("ki,ij,kj->k", D, xi, D)
        bb = np.einsum("ki,ij,kj->k", R0, xi, D)
        s = np.where(a > 1e-15, np.clip(-bb / np.where(a > 1e-15, a, 1.0), 0.0, 1.0), 0.0)
        R = R0 + s[:, None] * D
        return s, R, xi_norm(R, xi)

    def penetrations(X, margin=None):
        margin = d_safe if margin is None else margin
        P = X[:, :, :n]
        out = []
        for a, b in zip(*iu):
            rel = P[b] - P[a]
            s, R, d = closest(rel[:-1], rel[1:])
            for k in np.nonzero(d < margin)[0]:
                out.append(("a", a, b, k, s[k], R[k], d[k]))
        for a in range(N):
            for j, q in enumerate(obstacles):
                rel = q - P[a]
                s, R, d = closest(rel[:-1], rel[1:])
                for k in np.nonzero(d < margin)[0]:
                    out.append(("o", a, j, k, s[k], R[k], d[k]))
        return out

    def objective(U, X, w):
        pen = sum((d_safe - e[6]) ** 2 for e in penetrations(X))
        return dt * ticks_per_knot * float(np.sum(U * U)) + w * pen

    rng = np.random.default_rng(seed)
    U = 1e-3 * rng.standard_normal((N, nu))
    X = states(U)
    it_total = 0
    for w in penalty_weights:
        mu_lm = 1e-6
        for _ in range(max_iter):
            it_total += 1
            Sp, St = sensitivities(U, X)
            rows, res = [], []
            for kind, a, b, k, sk, rel, d in penetrations(X):
                grad = (xi @ rel) / max(d, 1e-12)
                row = np.zeros(nz)
                # rel = (1-s) rel_k + s rel_{k+1}; s held fixed (envelope argument)
                dA = (1 - sk) * (grad @ Sp[a, k]) + sk * (grad @ Sp[a, k + 1])
                row[a * nu:(a + 1) * nu] += dA
                if kind == "a":
                    row[b * nu:(b + 1) * nu] -= (1 - sk) * (grad @ Sp[b, k]) + sk * (grad @ Sp[b, k + 1])
                rows.append(np.sqrt(w) * row)
                res.append(np.sqrt(w) * (d_safe - d))
            Jc = np.array(rows).reshape(-1, nz)
            rc = np.array(res)
            c_diag = 2.0 * dt * ticks_per_knot + 2.0 * mu_lm
            gv = 2.0 * dt * ticks_per_knot * U.reshape(-1) + 2.0 * Jc.T @ rc
            T = np.zeros((N * 2 * n, nz))
            tres = np.empty(N * 2 * n)
            for i in range(N):
                T[i * 2 * n:(i + 1) * 2 * n, i * nu:(i + 1) * nu] = St[i]
                tres[i * 2 * n:(i + 1) * 2 * n] = X[i, -1] - x_goal[i]
            # Hessian c I + 2 Jc^T Jc is inverted through Woodbury; the terminal
            # conditions are eliminated through their Schur complement.
            small = np.linalg.cholesky(0.5 * c_diag * np.eye(Jc.shape[0]) + Jc @ Jc.T) if Jc.size else None

            def h_solve(B):
                if small is None:
                    return B / c_diag
                inner = np.linalg.solve(small.T, np.linalg.solve(small, Jc @ B))
                return (B - Jc.T @ inner) / c_diag

            HiT = h_solve(T.T)
            Hig = h_solve(gv)
            lam = np.linalg.solve(T @ HiT, tres - T @ Hig)
            sol = -Hig - HiT @ lam
            step = sol[:nz].reshape(N, nu)
            U_new = U + step
            X_new = states(U_new)
            f_old = objective(U, X, w) + 1e3 * float(tres @ tres)
            t_new = (X_new[:, -1] - x_goal).reshape(-1)
            f_new = objective(U_new, X_new, w) + 1e3 * float(t_new @ t_new)
            if f_new <= f_old + 1e-12:
                converged = np.abs(step).max() < 1e-8 * (1 + np.abs(U).max())
                U, X = U_new, X_new
                mu_lm = max(mu_lm / 3, 1e-9)
                if converged:
                    break
            else:
                mu_lm *= 10
                if mu_lm > 1e6:
                    break
        if not penetrations(X) and w >= penalty_weights[min(1, len(penalty_weights) - 1)]:
            break
    P = X[:, :, :n]
    V = X[:, :, n:]
    swept = [e[6] for e in penetrations(X, margin=cfg.r_s)]
    clearance = min(pairwise_clearance(P[:, k], obstacles, cfg.r_s, cfg.r_sen, xi) for k in range(n_ticks + 1))
    if swept:
        clearance = min(clearance, (min(swept) - cfg.r_s) / (cfg.r_sen - cfg.r_s))
    term_err = float(np.abs(X[:, -1] - x_goal).max())
    if not clearance > 0:
        raise PlannerFailure(f"plan collides: min clearance {clearance:.4g} after penalty continuation")
    if term_err > 1e-4 * (1 + np.abs(x_goal).max()):
        raise PlannerFailure(f"plan misses the goal by {term_err:.3g}")
    Uk = np.repeat(U.reshape(N, n_knots, m), ticks_per_knot, axis=1)
    A_ref = np.diff(V, axis=1) / dt
    hold = np.array([hold_input(plant, g) for g in goals])
    cost = dt * float(np.sum(Uk * Uk))
    times = dt * np.arange(n_ticks + 1)
    return GlobalPlan(times, P, V, Uk, A_ref, hold, cost, float(clearance), it_total)


def minimum_energy_double_integrator(distance, horizon) -> float:
    """Rest-to-rest minimum of the integrated squared input for a unit double integrator."""
    return 12.0 * float(distance) ** 2 / float(horizon) ** 3
