"""Stochastic closed-loop simulation of multi-agent scenarios."""
from __future__ import annotations

import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .baselines import (GlobalPlan, Perturbation, PolicySpec, Reference, clf_cbf_qp_policy,
                        global_reference_policy, learned_policy_emulated)
from .contraction import metric_at
from .dynamics import DisturbanceSpec, make_plant, propagate
from .errors import ConfigError, NonFiniteState, NotSafe, RiccatiFailure
from .gains import FilterGains, RobustGains
from .general_filter import safety_filter_general
from .lagrangian_filter import safety_filter_lagrangian
from .robust_filter import (SafeTargetTrajectory, error_envelope, estimate_plant_bounds, margin_from_envelope,
                            robust_filter, robust_filter_general)
from .world import AgentState, Observation, SafetyConfig, World, observe, pairwise_clearance

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ScenarioSpec:
    plant_key: str
    initial_positions: np.ndarray
    goal_positions: np.ndarray
    safety: SafetyConfig
    initial_velocities: np.ndarray = None
    obstacles: np.ndarray = None
    plant_params: dict = field(default_factory=dict)
    gains: FilterGains = field(default_factory=FilterGains)
    robust: RobustGains = field(default_factory=RobustGains)
    disturbance: DisturbanceSpec = field(default_factory=DisturbanceSpec)
    policy: PolicySpec = field(default_factory=PolicySpec)
    dt: float = 0.1
    horizon: float = 10.0
    substeps: int = 10
    n_monte_carlo: int = 1
    seed: int = 0
    goal_tolerance: float = 0.1
    randomize: bool = False
    randomize_box: tuple = None
    plan_ticks_per_knot: int = None
    plan_clearance_buffer: float = 0.1
    auto_margin_probability: float = None
    name: str = "scenario"

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("sim.dt", f"must be > 0, got {self.dt}")
        if not self.horizon >= self.dt:
            raise ConfigError("sim.horizon", f"must be >= dt, got {self.horizon}")
        if self.substeps < 1:
            raise ConfigError("sim.substeps", "must be >= 1")
        if self.n_monte_carlo < 1:
            raise ConfigError("sim.n_monte_carlo", "must be >= 1")
        if not self.goal_tolerance > 0:
            raise ConfigError("sim.goal_tolerance", "must be > 0")
        P0 = np.atleast_2d(np.asarray(self.initial_positions, dtype=float))
        PG = np.atleast_2d(np.asarray(self.goal_positions, dtype=float))
        if P0.shape != PG.shape:
            raise ConfigError("agents.goal_positions", f"shape {PG.shape} differs from initial positions {P0.shape}")
        V0 = np.zeros_like(P0) if self.initial_velocities is None else np.atleast_2d(
            np.asarray(self.initial_velocities, dtype=float))
        if V0.shape != P0.shape:
            raise ConfigError("agents.initial_velocities", "shape must match initial positions")
        n = P0.shape[1]
        obs = np.zeros((0, n)) if self.obstacles is None else np.asarray(self.obstacles, dtype=float).reshape(-1, n)
        if self.safety.dim != n:
            raise ConfigError("safety.xi", f"dimension {self.safety.dim} differs from state dimension {n}")
        object.__setattr__(self, "initial_positions", P0)
        object.__setattr__(self, "goal_positions", PG)
        object.__setattr__(self, "initial_velocities", V0)
        object.__setattr__(self, "obstacles", obs)
        if not self.randomize:
            check_initial_configuration(P0, obs, self.safety)
        if self.auto_margin_probability is not None and not 0 < self.auto_margin_probability < 1:
            raise ConfigError("robust.auto_margin_probability", "must lie in (0, 1)")

    @property
    def n_agents(self) -> int:
        return self.initial_positions.shape[0]

    @property
    def dim(self) -> int:
        return self.initial_positions.shape[1]

    @property
    def n_ticks(self) -> int:
        return int(round(self.horizon / self.dt))

    def plant(self):
        return make_plant(self.plant_key, **self.plant_params)

    def replace(self, **kw) -> "ScenarioSpec":
        return replace(self, **kw)


def check_initial_configuration(P, obstacles, cfg: SafetyConfig):
    P = np.asarray(P, dtype=float)
    c = pairwise_clearance(P, obstacles, cfg.inflated_radius, cfg.r_sen, cfg.xi)
    if not c > 0:
        raise ConfigError("agents.initial_positions",
                          f"initial configuration is unsafe (clearance {c:.4g} at inflated radius)")


def random_configuration(rng, n_agents, box, min_separation, obstacles=None, xi=None, max_tries=10_000):
    """Rejection-sample ``n_agents`` points in ``box = (low, high)`` at least ``min_separation`` apart."""
    low, high = (np.asarray(b, dtype=float) for b in box)
    n = low.size
    xi = np.eye(n) if xi is None else xi
    pts = []
    obstacles = np.zeros((0, n)) if obstacles is None else obstacles
    for _ in range(max_tries):
        q = rng.uniform(low, high)
        ok = all(np.sqrt((q - r) @ xi @ (q - r)) >= min_separation for r in pts)
        ok = ok and all(np.sqrt((q - o) @ xi @ (q - o)) >= min_separation for o in obstacles)
        if ok:
            pts.append(q)
            if len(pts) == n_agents:
                return np.array(pts)
    raise ConfigError("sim.randomize_box", "could not place agents with the required separation")


@dataclass(frozen=True, eq=False)
class RunResult:
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    inputs: np.ndarray
    min_h_series: np.ndarray
    margin_h_series: np.ndarray
    collided: bool
    success: bool
    control_effort: float
    rng_seed: int
    run_index: int = 0
    goals: np.ndarray = None
    tracking_error: np.ndarray = None
    composite_error: np.ndarray = None
    not_safe_events: int = 0
    qp_fallbacks: int = 0
    failure: str = None
    delta_r_s: float = 0.0
    plan_cost: float = None

    @property
    def min_h(self) -> float:
        return float(np.min(self.min_h_series))


def _rng(seed, run, stream=0):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(run), int(stream)])))


def resolve_states(spec: ScenarioSpec, run_index: int):
    """Initial and goal positions for one run; random draws come from their own stream."""
    if not spec.randomize:
        return spec.initial_positions, spec.initial_velocities, spec.goal_positions
    if spec.randomize_box is None:
        raise ConfigError("sim.randomize_box", "required when sim.randomize is true")
    rng = _rng(spec.seed, run_index, 1)
    # clearance (distance beyond r_s) of at least r_s + 2 delta_r_s
    sep = 2 * spec.safety.r_s + 2 * spec.safety.delta_r_s
    sep = max(sep, spec.safety.inflated_radius * (1.0 + spec.plan_clearance_buffer) * 1.05)
    P0 = random_configuration(rng, spec.n_agents, spec.randomize_box, sep, spec.obstacles, spec.safety.xi)
    PG = random_configuration(rng, spec.n_agents, spec.randomize_box, sep, spec.obstacles, spec.safety.xi)
    return P0, np.zeros_like(P0), PG


def needs_plan(spec: ScenarioSpec) -> bool:
    return spec.policy.kind == "global_reference" or spec.policy.reference == "plan"


def make_plan(spec: ScenarioSpec, plant, P0, V0, PG, cfg) -> GlobalPlan:
    return global_reference_policy(plant, P0, V0, PG, spec.horizon * plan_fraction(spec), spec.dt, cfg,
                                   spec.obstacles, spec.substeps, spec.plan_ticks_per_knot,
                                   spec.plan_clearance_buffer, seed=spec.seed)


def plan_fraction(spec) -> float:
    """Planned transfers end at 80% of the horizon, leaving time to settle."""
    return 0.8


class _Agents:
    """Per-run policy plumbing: references, perturbations and learned inputs."""

    def __init__(self, spec, plant, goals, plan, run_index=0):
        self.spec, self.plant, self.plan = spec, plant, plan
        pol = spec.policy
        self.refs = [plan.reference(i, goals[i]) if (plan is not None and pol.reference == "plan")
                     else Reference(goals[i]) for i in range(spec.n_agents)]
        m = plant.dim_input
        self.perturb = [Perturbation(pol.error_magnitude, m, (spec.seed, run_index), i, pol.perturbation_frequency)
                        for i in range(spec.n_agents)]

    def learned(self, obs):
        i = obs.self_index
        return learned_policy_emulated(obs, self.plant, self.refs[i], self.spec.policy.error_magnitude,
                                       self.spec.seed, self.spec.policy, self.perturb[i])


def safety_filtered_input(agents: _Agents, obs: Observation, cfg, gains, plant):
    u_l = agents.learned(obs)
    if plant.kind == "lagrangian":
        out = safety_filter_lagrangian(u_l, plant, obs, None, cfg, gains)
    else:
        out = safety_filter_general(u_l, plant, obs, None, cfg, gains)
    return out.u


def rollout_safe_target(agents: _Agents, plant, cfg, gains, P, V, t0, n_ticks, dt, substeps, obstacles):
    """Disturbance-free joint rollout of the safety-filtered learned policy.

    Returns one :class:`SafeTargetTrajectory` per agent; raises
    :class:`NotSafe` if the start state is outside the barrier domain.
    """
    N, n = P.shape
    Ps = np.empty((n_ticks + 1, N, n))
    Vs = np.empty((n_ticks + 1, N, n))
    Us = np.empty((n_ticks, N, plant.dim_input))
    Ps[0], Vs[0] = P, V
    for k in range(n_ticks):
        t = t0 + k * dt
        world = World.from_arrays(Ps[k], Vs[k], obstacles, t)
        for i in range(N):
            Us[k, i] = safety_filtered_input(agents, observe(world, i, cfg), cfg, gains, plant)
        for i in range(N):
            Ps[k + 1, i], Vs[k + 1, i] = propagate(plant, Ps[k, i], Vs[k, i], Us[k, i], dt, substeps, t=t)
    times = t0 + dt * np.arange(n_ticks + 1)
    A = np.diff(Vs, axis=0) / dt
    Uh = np.concatenate([Us, Us[-1:]], axis=0)
    Ah = np.concatenate([A, A[-1:]], axis=0)
    return [SafeTargetTrajectory(times, Ps[:, i], Vs[:, i], Uh[:, i], Ah[:, i]) for i in range(N)]


def auto_margin(spec: ScenarioSpec, plant, initial_error=0.0) -> float:
    """Robustness margin from the stochastic error envelope at the configured probability."""
    n = spec.dim
    box = (-np.ones(n) * 5, np.ones(n) * 5)
    if plant.kind == "lagrangian":
        bounds = estimate_plant_bounds(plant, box, spec.disturbance, n_samples=2000, seed=spec.seed)
    else:
        from .robust_filter import PlantBounds
        bounds = PlantBounds(1.0, 1.0, spec.disturbance.gamma_bar ** 2, 0.0, 0.0)
    env = error_envelope(spec.robust, bounds, spec.disturbance, initial_error, dim=n)
    return margin_from_envelope(env, spec.auto_margin_probability, spec.horizon)


def _push_direction(p, P, i, obstacles, xi):
    """Vector from agent ``i`` toward its nearest object, or None."""
    best, vec = np.inf, None
    for j in range(P.shape[0]):
        if j != i:
            d = P[j] - p
            r = np.sqrt(d @ xi @ d)
            if r < best:
                best, vec = r, d
    for q in obstacles:
        d = q - p
        r = np.sqrt(d @ xi @ d)
        if r < best:
            best, vec = r, d
    return vec


def _margin_h(P, obstacles, cfg):
    return pairwise_clearance(P, obstacles, cfg.inflated_radius, cfg.r_sen, cfg.xi)


def run_scenario(spec: ScenarioSpec, run_index: int = 0, plan: GlobalPlan = None) -> RunResult:
    plant = spec.plant()
    P0, V0, PG = resolve_states(spec, run_index)
    cfg = spec.safety
    pol = spec.policy
    delta = cfg.delta_r_s
    if pol.kind == "cart_full" and spec.auto_margin_probability is not None:
        delta = auto_margin(spec, plant)
        cfg = cfg.with_margin(delta)
    if spec.randomize:
        check_initial_configuration(P0, spec.obstacles, cfg)
    if plan is None and needs_plan(spec):
        plan = make_plan(spec, plant, P0, V0, PG, cfg)
    agents = _Agents(spec, plant, PG, plan, run_index)
    N, n, K, dt = spec.n_agents, spec.dim, spec.n_ticks, spec.dt
    m = plant.dim_input
    rng = _rng(spec.seed, run_index, 0)
    dist = spec.disturbance
    Gam = dist.diffusion(n)
    h_sub = dt / spec.substeps

    P_hist = np.empty((K + 1, N, n))
    V_hist = np.empty((K + 1, N, n))
    U_hist = np.zeros((K, N, m))
    min_h = np.empty(K + 1)
    margin_h = np.empty(K + 1)
    track = np.full(K + 1, np.nan)
    comp = np.full(K + 1, np.nan)
    P_hist[0], V_hist[0] = P0, V0
    min_h[0] = pairwise_clearance(P0, spec.obstacles, cfg.r_s, cfg.r_sen, cfg.xi)
    margin_h[0] = _margin_h(P0, spec.obstacles, cfg)
    not_safe = 0
    fallbacks = 0
    failure = None
    targets = None
    target_ok = True
    learned_traj = None
    if pol.kind == "clf_cbf_qp":
        learned_traj = _learned_rollout(agents, plant, P0, V0, K, dt, spec.substeps, spec.obstacles)
    R_inv = None
    if pol.kind == "cart_full" and plant.kind != "lagrangian" and spec.gains.general_variant == "damped":
        R_inv = np.linalg.inv(spec.gains.R_for(m))

    k_done = K
    for k in range(K):
        t = k * dt
        P, V = P_hist[k], V_hist[k]
        world = World.from_arrays(P, V, spec.obstacles, t)
        obs_all = [observe(world, i, cfg) for i in range(N)]
        U = np.empty((N, m))
        if pol.kind == "cart_full":
            expired = targets is None or targets[0].t1 < t + dt - 1e-9
            if k % pol.replan_period == 0 or expired:
                try:
                    targets = rollout_safe_target(agents, plant, cfg, spec.gains, P, V, t, pol.target_window,
                                                  dt, spec.substeps, spec.obstacles)
                except (NotSafe, RiccatiFailure):
                    not_safe += 1
                    if expired:
                        # continue the previous target from its own (safe) end state
                        if targets is not None:
                            Pe = np.array([tr.p_d[-1] for tr in targets])
                            Ve = np.array([tr.v_d[-1] for tr in targets])
                            try:
                                targets = rollout_safe_target(agents, plant, cfg, spec.gains, Pe, Ve,
                                                              targets[0].t1, pol.target_window, dt,
                                                              spec.substeps, spec.obstacles)
                            except (NotSafe, RiccatiFailure):
                                targets = None
            pts = None if targets is None else [tr.at(t) for tr in targets]
        for i, obs in enumerate(obs_all):
            if pol.kind == "global_reference":
                U[i] = plan.input_at(i, k)
                continue
            u_l = agents.learned(obs)
            try:
                if pol.kind == "learned_emulated":
                    U[i] = u_l
                elif pol.kind == "cart_safety_only":
                    if plant.kind == "lagrangian":
                        U[i] = safety_filter_lagrangian(u_l, plant, obs, None, cfg, spec.gains).u
                    else:
                        U[i] = safety_filter_general(u_l, plant, obs, None, cfg, spec.gains).u
                elif pol.kind == "cart_full":
                    if pts is None:
                        U[i] = u_l
                        continue
                    tp = pts[i]
                    state = obs.self_state
                    if plant.kind == "lagrangian":
                        out = robust_filter(None, tp, state, plant, spec.robust)
                    else:
                        lam = spec.robust.lambda_matrix(n)
                        v_r = tp.v - lam @ (state.p - tp.p)
                        metric = metric_at(plant, state.p, state.v, v_r, t, spec.gains)
                        out = robust_filter_general(None, tp, state, plant, spec.robust, metric, t, R_inv=R_inv)
                    U[i] = out.u
                    track[k] = np.nanmax([track[k], np.linalg.norm(state.p - tp.p)])
                    comp[k] = np.nanmax([comp[k], np.linalg.norm(out.e_v)])
                elif pol.kind == "clf_cbf_qp":
                    lp = (learned_traj[0][k, i], learned_traj[1][k, i], learned_traj[2][k, i])
                    res = clf_cbf_qp_policy(obs, plant, cfg, u_l, lp, pol.qp_params)
                    fallbacks += int(res.fallback)
                    U[i] = res.u
            except (NotSafe, RiccatiFailure) as exc:
                not_safe += 1
                log.debug("agent %d at t=%.2f: %s; applying the raw policy input", i, t, exc)
                U[i] = u_l
        U_hist[k] = U
        P_new = np.empty_like(P)
        V_new = np.empty_like(V)
        paths = [[] for _ in range(N)]
        for i in range(N):
            push = _push_direction(P[i], P, i, spec.obstacles, cfg.xi) if dist.d_profile == "worst-case-radial" else None
            force = dist.force(P[i], V[i], t, i, push)
            noise = None
            if dist.gamma_bar > 0:
                xi_ = rng.standard_normal((spec.substeps, n))
                noise = (xi_ @ plant.noise_gain(P[i], Gam).T) * np.sqrt(h_sub)
            P_new[i], V_new[i] = propagate(plant, P[i], V[i], U[i], dt, spec.substeps, force, noise, t,
                                          path=paths[i])
        if not (np.all(np.isfinite(P_new)) and np.all(np.isfinite(V_new))):
            failure = str(NonFiniteState(f"non-finite state at t={t + dt:.3f}"))
            k_done = k
            break
        P_hist[k + 1], V_hist[k + 1] = P_new, V_new
        # collisions between control ticks count too
        sub = np.stack([np.stack(pth) for pth in paths], axis=1)
        min_h[k + 1] = min(pairwise_clearance(Ps, spec.obstacles, cfg.r_s, cfg.r_sen, cfg.xi) for Ps in sub)
        margin_h[k + 1] = _margin_h(P_new, spec.obstacles, cfg)

    if k_done < K:
        P_hist, V_hist, U_hist = P_hist[:k_done + 1], V_hist[:k_done + 1], U_hist[:k_done]
        min_h, margin_h = min_h[:k_done + 1], margin_h[:k_done + 1]
        track, comp = track[:k_done + 1], comp[:k_done + 1]
    collided = bool(np.min(min_h) < 0) or failure is not None
    at_goal = np.linalg.norm(P_hist[-1] - PG, axis=1) <= spec.goal_tolerance
    success = (not collided) and failure is None and bool(np.all(at_goal))
    J = float(np.sum(U_hist**2) * dt)
    return RunResult(dt * np.arange(P_hist.shape[0]), P_hist, V_hist, U_hist, min_h, margin_h, collided, success, J,
                     int(spec.seed), run_index, PG, track, comp, not_safe, fallbacks, failure, float(delta),
                     None if plan is None else plan.cost)


def _learned_rollout(agents, plant, P0, V0, K, dt, substeps, obstacles):
    """Disturbance-free trajectory of the unfiltered learned policy (the CLF target)."""
    N, n = P0.shape
    P = np.empty((K + 1, N, n))
    V = np.empty((K + 1, N, n))
    P[0], V[0] = P0, V0
    for k in range(K):
        t = k * dt
        for i in range(N):
            obs = Observation(AgentState(P[k, i], V[k, i]), (), (), t, i)
            u = agents.learned(obs)
            P[k + 1, i], V[k + 1, i] = propagate(plant, P[k, i], V[k, i], u, dt, substeps, t=t)
    A = np.diff(V, axis=0) / dt
    return P[:-1], V[:-1], A


# --- Monte Carlo ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MonteCarloSummary:
    n_runs: int
    success_rate: float
    success_ci: tuple
    collision_rate: float
    mean_J: float
    std_J: float
    min_h: np.ndarray
    mean_tracking_error: np.ndarray
    runs: list

    def as_dict(self) -> dict:
        return {
            "n_runs": self.n_runs,
            "success_rate": self.success_rate,
            "success_ci_low": self.success_ci[0],
            "success_ci_high": self.success_ci[1],
            "collision_rate": self.collision_rate,
            "mean_J": self.mean_J,
            "std_J": self.std_J,
            "min_h_min": float(np.min(self.min_h)),
            "min_h_mean": float(np.mean(self.min_h)),
        }


def wilson_interval(successes, n, z=1.96):
    if n == 0:
        return (0.0, 1.0)
    p = successes / n
    den = 1 + z * z / n
    center = (p + z * z / (2 * n)) / den
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == n else min(1.0, center + half)
    return (float(lo), float(hi))


def _run_one(args):
    spec, idx = args
    return run_scenario(spec, idx)


def monte_carlo(spec: ScenarioSpec, n_runs: int = None, workers: int = 1) -> MonteCarloSummary:
    n_runs = spec.n_monte_carlo if n_runs is None else n_runs
    if n_runs < 1:
        raise ConfigError("sim.n_monte_carlo", "must be >= 1")
    jobs = [(spec, r) for r in range(n_runs)]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            runs = list(ex.map(_run_one, jobs))
    else:
        runs = [_run_one(j) for j in jobs]
    return summarize(runs)


def summarize(runs) -> MonteCarloSummary:
    n_runs = len(runs)
    succ = sum(r.success for r in runs)
    J = np.array([r.control_effort for r in runs])
    L = min(len(r.tracking_error) for r in runs)
    with warnings.catch_warnings():
        # runs without a tracking layer carry all-NaN tracking error
        warnings.simplefilter("ignore", RuntimeWarning)
        track = np.nanmean(np.array([r.tracking_error[:L] for r in runs]), axis=0) if L else np.zeros(0)
    return MonteCarloSummary(n_runs, succ / n_runs, wilson_interval(succ, n_runs),
                             float(np.mean([r.collided for r in runs])), float(J.mean()), float(J.std()),
                             np.array([r.min_h for r in runs]), track, runs)


def _plan_key(spec: ScenarioSpec):
    cfg = spec.safety
    return (spec.plant_key, repr(sorted(spec.plant_params.items())), cfg.r_s, cfg.delta_r_s, cfg.r_sen,
            cfg.xi.tobytes(), spec.obstacles.tobytes(), spec.initial_positions.tobytes(),
            spec.goal_positions.tobytes(), spec.randomize, spec.seed, spec.dt, spec.horizon, spec.substeps,
            spec.plan_ticks_per_knot, spec.plan_clearance_buffer)


def _compare_one(args):
    variants, r = args
    plans = {}
    out = {}
    for label, spec in variants.items():
        plan = None
        if needs_plan(spec) and spec.auto_margin_probability is None:
            key = _plan_key(spec)
            if key not in plans:
                P0, V0, PG = resolve_states(spec, r)
                plans[key] = make_plan(spec, spec.plant(), P0, V0, PG, spec.safety)
            plan = plans[key]
        out[label] = run_scenario(spec, r, plan=plan)
    return out


def compare_policies(variants: dict, n_runs: int, workers: int = 1) -> dict:
    """Monte Carlo over several scenario variants with shared run indices.

    Variants with the same geometry and timing reuse one reference plan
    per run, which is also what makes their costs comparable.
    """
    if n_runs < 1:
        raise ConfigError("sim.n_monte_carlo", "must be >= 1")
    jobs = [(variants, r) for r in range(n_runs)]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            per_run = list(ex.map(_compare_one, jobs))
    else:
        per_run = [_compare_one(j) for j in jobs]
    return {label: summarize([pr[label] for pr in per_run]) for label in variants}


# --- tracking-error envelope check -------------------------------------------

@dataclass(frozen=True, eq=False)
class EnvelopeCheck:
    times: np.ndarray
    mean_s: np.ndarray
    s_bound: np.ndarray
    exceed_prob: np.ndarray
    prob_bound: np.ndarray
    sigma: np.ndarray
    D_s: float
    envelope: object

    def worst_mean_ratio(self) -> float:
        """``max_t mean|s| / (a + b exp(-k t))``."""
        return float(np.max(self.mean_s / self.s_bound))

    def worst_prob_excess(self) -> float:
        """``max_t P_hat - (D_E/D_s + 3 sigma)``; nonpositive when the bound holds."""
        return float(np.max(self.exceed_prob - self.prob_bound - 3.0 * self.sigma))

    def rows(self):
        return [("t", "mean_s", "s_bound", "exceed_prob", "prob_bound", "sigma")] + [
            tuple(float(x) for x in r) for r in
            zip(self.times, self.mean_s, self.s_bound, self.exceed_prob, self.prob_bound, self.sigma)]


def envelope_monte_carlo(gains: RobustGains = None, disturbance: DisturbanceSpec = None, n_paths=500, dim=2,
                         horizon=4.0, dt=0.02, initial_error=0.5, seed=0, D_s=None) -> EnvelopeCheck:
    """Unit-mass plant tracking a smooth target under the robust filter.

    Every path starts ``initial_error`` off the target along a random
    direction with matched velocity, is pushed by a constant force of
    norm ``d_bar`` and diffused with ``|Gamma|_F = gamma_bar``.  ``D_s``
    defaults to the margin with a 50% exceedance budget.
    """
    from .dynamics import double_integrator_plant
    from .robust_filter import PlantBounds, TargetPoint

    gains = RobustGains(1.0, 4.0, 1.0) if gains is None else gains
    disturbance = DisturbanceSpec(0.1, 0.1) if disturbance is None else disturbance
    plant = double_integrator_plant(dim)
    env = error_envelope(gains, PlantBounds(1.0, 1.0), disturbance, initial_error, dim=dim)
    D_s = margin_from_envelope(env, 0.5, horizon) if D_s is None else float(D_s)
    env = env.with_margin(D_s)

    rng = _rng(seed, 0, 99)
    n_ticks = int(round(horizon / dt))
    times = np.arange(n_ticks + 1) * dt
    w = 0.5 * np.arange(1, dim + 1)

    def target(t):
        return TargetPoint(np.sin(w * t), w * np.cos(w * t), -w**2 * np.sin(w * t), -w**2 * np.sin(w * t))

    dirs = rng.standard_normal((n_paths, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    tp0 = target(0.0)
    P = tp0.p + initial_error * dirs
    V = np.tile(tp0.v, (n_paths, 1))
    force = disturbance.force(np.zeros(dim), np.zeros(dim), 0.0, agent=0)
    gamma = disturbance.diffusion(dim)
    s_norm = np.zeros((n_ticks + 1, n_paths))
    e_norm = np.zeros((n_ticks + 1, n_paths))
    lam = gains.lambda_matrix(dim)
    for k in range(n_ticks + 1):
        tp = target(times[k])
        E = P - tp.p
        e_norm[k] = np.linalg.norm(E, axis=1)
        s_norm[k] = np.linalg.norm((V - tp.v) + E @ lam.T, axis=1)
        if k == n_ticks:
            break
        U = np.array([robust_filter(None, tp, AgentState(P[j], V[j]), plant, gains).u for j in range(n_paths)])
        dW = rng.standard_normal((n_paths, dim)) * np.sqrt(dt)
        V = V + (U + force) * dt + dW @ gamma.T
        P = P + V * dt
    q = np.mean(e_norm > D_s, axis=1)
    bound = env.position_bound(times) / D_s
    p_ref = np.clip(bound, 0.0, 1.0)
    sigma = np.sqrt(p_ref * (1 - p_ref) / n_paths)
    return EnvelopeCheck(times, s_norm.mean(axis=1), env.mean_s_bound(times), q, bound, sigma, D_s, env)
