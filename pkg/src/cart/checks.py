"""Numerical invariant suites with fixed seeds.

Each ``check_*`` function returns a :class:`CheckReport` holding the worst
observed residual and the threshold it is held to.  The command line runs
them through ``cart verify``; the test suite calls them directly.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .barrier import barrier_terms, eval_barrier, safe_velocity
from .contraction import contraction_lhs, max_eig, metric_at
from .dynamics import (LAGRANGIAN_KEYS, AffinePlant, LagrangianPlant, make_plant, nonlinear_example_plant,
                       propagate, sdc_factorize)
from .gains import FilterGains, RobustGains
from .general_filter import safety_filter_general
from .lagrangian_filter import safety_filter_lagrangian
from .qp import solve_qp_enumerate
from .robust_filter import TargetPoint, robust_filter
from .world import AgentState, Observation, SafetyConfig


@dataclass
class CheckReport:
    name: str
    worst: float
    threshold: float
    passed: bool
    seconds: float = 0.0
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: worst {self.worst:.3e} (threshold {self.threshold:.1e}), {self.seconds:.2f}s"


def _spd(rng, n, lo=0.5, hi=3.0):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return (Q * rng.uniform(lo, hi, n)) @ Q.T


def _constant_mass_plant(M) -> LagrangianPlant:
    n = M.shape[0]
    zero = np.zeros((n, n))
    return LagrangianPlant(n, lambda p: M, lambda p, v: zero, lambda p: np.zeros(n), constant_mass=True)


def random_observation(rng, n, cfg: SafetyConfig, n_agents=2, n_obstacles=2, min_h=0.05):
    """Agent at the origin with in-range neighbors at clearance at least ``min_h``."""
    agents, obstacles = [], []
    for k in range(n_agents + n_obstacles):
        while True:
            d = rng.standard_normal(n)
            d /= np.sqrt(d @ cfg.xi @ d)
            r = rng.uniform(cfg.inflated_radius + min_h * cfg.span, cfg.r_sen - 0.02 * cfg.span)
            q = r * d
            if np.linalg.norm(q) <= cfg.r_sen:
                break
        if k < n_agents:
            agents.append((k + 1, AgentState(q, rng.standard_normal(n))))
        else:
            obstacles.append((k, q))
    me = AgentState(np.zeros(n), rng.standard_normal(n))
    return Observation(me, tuple(agents), tuple(obstacles))


def check_kkt(n_instances=10_000, seed=0, threshold=1e-12) -> CheckReport:
    """Closed-form filters against an exhaustive active-set QP, dims 1-6."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    by_kind = {"lagrangian": 0.0, "general": 0.0, "robust": 0.0}
    active = 0
    configs = {n: SafetyConfig(0.3, 0.0, 1.5, dim=n) for n in range(1, 7)}
    for k in range(n_instances):
        n = int(rng.integers(1, 7))
        cfg = configs[n]
        kind = ("lagrangian", "general", "robust")[k % 3]
        M = _spd(rng, n)
        u_l = 3.0 * rng.standard_normal(n)
        if kind == "robust":
            plant = _constant_mass_plant(M)
            target = TargetPoint(*rng.standard_normal((4, n)))
            state = AgentState(rng.standard_normal(n), rng.standard_normal(n))
            out = robust_filter(u_l, target, state, plant, RobustGains(rng.uniform(0.5, 2), rng.uniform(0.5, 4)))
            normal, slack = out.normal, 0.0
        else:
            obs = random_observation(rng, n, cfg, int(rng.integers(0, 3)), int(rng.integers(0, 3)))
            nbr_v = obs.neighbor_velocities()
            gains = FilterGains(rng.uniform(0.1, 2), rng.uniform(0.1, 2), relaxation=float(rng.choice([0.0, 1.0])))
            if kind == "lagrangian":
                out = safety_filter_lagrangian(u_l, _constant_mass_plant(M), obs, nbr_v, cfg, gains)
            else:
                A = rng.standard_normal((n, n))
                B = rng.standard_normal((n, n))
                plant = AffinePlant(n, n, lambda p, v, t=0.0, A=A: A @ v, lambda p, v, t=0.0, B=B: B)
                out = safety_filter_general(u_l, plant, obs, nbr_v, cfg, gains, metric=M)
            normal, slack = out.normal, out.slack
        m = u_l.size
        ref = solve_qp_enumerate(2.0 * np.eye(m), -2.0 * u_l, normal.reshape(1, m),
                                 np.array([normal @ out.u_bar + slack])).x
        err = float(np.abs(out.u - ref).max() / (1.0 + np.abs(ref).max()))
        active += bool(out.active)
        by_kind[kind] = max(by_kind[kind], err)
        worst = max(worst, err)
    details = dict(by_kind, active_fraction=active / n_instances, n_instances=n_instances)
    return CheckReport("kkt", worst, threshold, worst <= threshold, time.perf_counter() - t0, details)


def _shift(obs: Observation, eps, direction=None, velocities=None):
    """Move the agent and its neighbors by ``eps`` along their velocities (or ``direction`` for the agent only)."""
    me = obs.self_state
    if direction is not None:
        return Observation(AgentState(me.p + eps * direction, me.v), obs.neighbor_agents, obs.neighbor_obstacles)
    agents = tuple((j, AgentState(s.p + eps * vj, s.v)) for (j, s), vj in zip(obs.neighbor_agents, velocities))
    return Observation(AgentState(me.p + eps * me.v, me.v), agents, obs.neighbor_obstacles)


def check_gradients(n_configs=100, seed=0, threshold_grad=1e-6, threshold_rate=1e-5, eps=1e-6) -> CheckReport:
    """Analytic barrier gradient and safe-velocity rate against central differences."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst_g = worst_r = 0.0
    for _ in range(n_configs):
        n = int(rng.integers(1, 5))
        xi = np.diag(rng.uniform(0.3, 1.0, n))
        cfg = SafetyConfig(0.2, float(rng.uniform(0, 0.05)), 1.2, xi)
        obs = random_observation(rng, n, cfg, int(rng.integers(1, 4)), int(rng.integers(0, 3)), min_h=0.1)
        k_p = rng.uniform(0.1, 2.0)
        ev = eval_barrier(obs, cfg)
        fd = np.array([(eval_barrier(_shift(obs, eps, e), cfg).psi - eval_barrier(_shift(obs, -eps, e), cfg).psi)
                       / (2 * eps) for e in np.eye(n)])
        worst_g = max(worst_g, float(np.linalg.norm(ev.grad_p - fd) / np.linalg.norm(ev.grad_p)))
        nbr_v = obs.neighbor_velocities()
        _, _, vdot = barrier_terms(obs, cfg, k_p, neighbor_velocities=nbr_v)
        fd_rate = (safe_velocity(_shift(obs, eps, velocities=nbr_v), cfg, k_p)
                   - safe_velocity(_shift(obs, -eps, velocities=nbr_v), cfg, k_p)) / (2 * eps)
        scale = max(np.linalg.norm(vdot), 1e-300)
        worst_r = max(worst_r, float(np.linalg.norm(vdot - fd_rate) / scale))
    passed = worst_g <= threshold_grad and worst_r <= threshold_rate
    return CheckReport("gradients", max(worst_g, worst_r / threshold_rate * threshold_grad), threshold_grad, passed,
                       time.perf_counter() - t0, {"gradient_rel_err": worst_g, "rate_rel_err": worst_r})


def check_lagrangian_structure(n_states=1000, seed=0, threshold=1e-8, eps=1e-3) -> CheckReport:
    """``|z^T (M_dot - 2 C) z|`` for every registered Lagrangian plant.

    ``M_dot`` comes from a five-point central difference along ``v``.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    per_plant = {}
    for key in LAGRANGIAN_KEYS:
        plant = make_plant(key)
        w = 0.0
        for _ in range(n_states):
            p, v, z = rng.uniform(-3, 3, (3, plant.dim))
            Mq = [plant.mass_matrix(p + k * eps * v) for k in (-2, -1, 1, 2)]
            M_dot = (Mq[0] - 8 * Mq[1] + 8 * Mq[2] - Mq[3]) / (12 * eps)
            val = abs(float(z @ (M_dot - 2.0 * plant.coriolis(p, v)) @ z))
            w = max(w, val)
        per_plant[key] = w
        worst = max(worst, w)
    return CheckReport("lagrangian", worst, threshold, worst <= threshold, time.perf_counter() - t0, per_plant)


def check_sdc(n_states=1000, seed=0) -> CheckReport:
    """``A (v - v_ref) = f(v) - f(v_ref)``: 1e-10 on the quadratic example, 1e-8 elsewhere."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    plants = {"nonlinear_example": (make_plant("nonlinear_example"), 1e-10),
              "nonlinear_example_underactuated": (make_plant("nonlinear_example_underactuated"), 1e-8),
              "spacecraft_planar": (make_plant("spacecraft_planar"), 1e-8),
              "two_link_arm": (make_plant("two_link_arm").as_affine(), 1e-8),
              "leo_hcw": (make_plant("leo_hcw").as_affine(), 1e-8)}
    details, ok, ratio = {}, True, 0.0
    for key, (plant, tol) in plants.items():
        w = 0.0
        for _ in range(n_states):
            p, v, vr = rng.uniform(-2, 2, (3, plant.dim_state))
            A = sdc_factorize(plant, p, v, vr)
            w = max(w, float(np.linalg.norm(A @ (v - vr) - (plant.drift(p, v) - plant.drift(p, vr)))))
        details[key] = w
        ok &= w <= tol
        ratio = max(ratio, w / tol)
    return CheckReport("sdc", ratio, 1.0, ok, time.perf_counter() - t0, details)


def _closed_loop_example(dt=0.1, horizon=10.0, gains=None):
    """Filtered nonlinear example among static obstacles; returns per-tick states and inputs."""
    from .scenario import canned
    spec = canned("nonlinear_small", ["disturbance.d_bar=0.0", "disturbance.gamma_bar=0.0",
                                      f"sim.dt={dt}", f"sim.horizon={horizon}"])
    if gains is not None:
        spec = spec.replace(gains=gains)
    from .sim import run_scenario
    return spec, run_scenario(spec, 0)


def check_contraction(threshold=1e-4, delta=1e-3, stride=1) -> CheckReport:
    """Contraction inequality along a disturbance-free filtered run, ``M_dot`` from +-delta propagation."""
    t0 = time.perf_counter()
    spec, res = _closed_loop_example()
    plant = spec.plant()
    cfg, gains = spec.safety, spec.gains
    obstacles = spec.obstacles

    def v_ref_at(p, v):
        from .world import World, observe
        obs = observe(World.from_arrays([p], [v], obstacles), 0, cfg)
        return safe_velocity(obs, cfg, gains.k_p)

    worst = -np.inf
    for k in range(0, res.inputs.shape[0], stride):
        p, v, u = res.positions[k, 0], res.velocities[k, 0], res.inputs[k, 0]
        ev = metric_at(plant, p, v, v_ref_at(p, v), 0.0, gains)
        pf, vf = propagate(plant, p, v, u, delta, substeps=10)
        pb, vb = propagate(plant, p, v, u, -delta, substeps=10)
        Mf = metric_at(plant, pf, vf, v_ref_at(pf, vf), 0.0, gains).M
        Mb = metric_at(plant, pb, vb, v_ref_at(pb, vb), 0.0, gains).M
        M_dot = (Mf - Mb) / (2 * delta)
        R = gains.R_for(ev.B.shape[1])
        worst = max(worst, max_eig(contraction_lhs(ev.M, M_dot, ev.A, ev.B, R, gains.k_v)))
    return CheckReport("contraction", float(worst), threshold, worst <= threshold, time.perf_counter() - t0,
                       {"samples": res.inputs.shape[0]})


def _lyapunov_run(plant, P0, V0, obstacles, cfg, gains, learned, dt, horizon, general):
    """Single agent among static obstacles, filter at every tick, no disturbance.

    Returns the largest excess of the one-tick finite-difference rate of
    ``k_p psi + e_v^T M e_v / 2`` over the decrease bound evaluated at the
    start of the tick.  The general filter's bound carries the measured
    contraction residual, since the metric varies along the run.
    """
    from .world import World, observe
    p, v = np.array(P0, float), np.array(V0, float)
    n_ticks = int(round(horizon / dt))

    def energy(p, v):
        obs = observe(World.from_arrays([p], [v], obstacles), 0, cfg)
        ev, v_d, _ = barrier_terms(obs, cfg, gains.k_p, neighbor_velocities=[])
        e = v - v_d
        M = metric_at(plant, p, v, v_d, 0.0, gains) if general else None
        Mm = M.M if general else plant.mass_matrix(p)
        return obs, ev, v_d, e, Mm, M

    excess = -np.inf
    n_active = 0
    obs, ev, v_d, e, Mm, met = energy(p, v)
    for k in range(n_ticks):
        u_l = learned(p, v)
        V_now = gains.k_p * ev.psi + 0.5 * e @ Mm @ e
        bound = -(gains.k_p**2) * float(ev.grad_p @ ev.grad_p) - gains.k_v * 0.5 * float(e @ Mm @ e)
        if general:
            out = safety_filter_general(u_l, plant, obs, [], cfg, gains, metric=met)
        else:
            out = safety_filter_lagrangian(u_l, plant, obs, [], cfg, gains)
        bound += out.slack
        n_active += bool(out.active)
        p1, v1 = propagate(plant, p, v, out.u, dt, substeps=10)
        obs1, ev1, v_d1, e1, Mm1, met1 = energy(p1, v1)
        if general:
            # metric drift over the tick is not part of the filter's guarantee
            M_dot = (Mm1 - Mm) / dt
            lhs = contraction_lhs(Mm, M_dot, met.A, met.B, gains.R_for(met.B.shape[1]), gains.k_v)
            bound += 0.5 * max(0.0, max_eig(lhs + gains.q_margin * np.eye(lhs.shape[0]))) * float(e @ e)
        V_next = gains.k_p * ev1.psi + 0.5 * e1 @ Mm1 @ e1
        # v_d jumps when an object crosses the sensing radius; those ticks are not smooth
        if obs.object_keys() == obs1.object_keys():
            excess = max(excess, (V_next - V_now) / dt - bound)
        p, v, obs, ev, v_d, e, Mm, met = p1, v1, obs1, ev1, v_d1, e1, Mm1, met1
    return float(excess), n_active


def check_lyapunov(dt0=0.02, horizon=2.0, shrink_limit=0.7, floor=1e-9) -> CheckReport:
    """Decrease bound of the safety Lyapunov function, with an O(dt) cushion.

    The cushion (largest positive excess of the finite-difference rate over
    the bound) is measured at ``dt0``, ``dt0/2`` and ``dt0/4``; it must shrink
    by at least ``shrink_limit`` per halving unless already below ``floor``.
    """
    t0 = time.perf_counter()
    cases = {}
    cfg2 = SafetyConfig(0.1, 0.0, 0.5, dim=2)
    obstacles = np.array([[0.5, 0.42], [0.2, 0.7]])
    goal = np.array([0.0, 0.0])

    def toward_goal(p, v):
        return -2.0 * (p - goal) - 1.0 * v

    arm = make_plant("two_link_arm")
    cases["double_integrator"] = (make_plant("double_integrator"), [1.0, 1.0], [-0.5, -0.6], False)
    cases["two_link_arm"] = (arm, [1.0, 1.0], [-0.5, -0.6], False)
    cases["nonlinear_example"] = (nonlinear_example_plant(), [1.0, 1.0], [-0.5, -0.6], True)
    gains = FilterGains(0.3, 1.0)
    details = {}
    ok = True
    worst_ratio = 0.0
    for name, (plant, p0, v0, general) in cases.items():
        if isinstance(plant, LagrangianPlant) and plant.name == "two_link_arm":
            learned = lambda p, v, pl=plant: toward_goal(p, v) + pl.gravity(p)  # noqa: E731
        else:
            learned = toward_goal
        runs = [_lyapunov_run(plant, p0, v0, obstacles, cfg2, gains, learned, dt0 / 2**j, horizon, general)
                for j in range(3)]
        cush = [max(0.0, r[0]) for r in runs]
        ratios = [(cush[j + 1] / cush[j]) if cush[j] > floor else 0.0 for j in range(2)]
        case_ok = all(c <= floor or r <= shrink_limit for c, r in zip(cush[1:], ratios))
        details[name] = {"cushions": cush, "ratios": ratios, "active_ticks": [r[1] for r in runs]}
        ok &= case_ok
        worst_ratio = max(worst_ratio, *ratios)
    return CheckReport("lyapunov", worst_ratio, shrink_limit, ok, time.perf_counter() - t0, details)


def check_envelope(n_paths=500, seed=0, mean_factor=1.1) -> CheckReport:
    """Monte Carlo composite error and exceedance probability against the analytic envelope."""
    from .sim import envelope_monte_carlo
    t0 = time.perf_counter()
    env = envelope_monte_carlo(n_paths=n_paths, seed=seed)
    ratio = env.worst_mean_ratio()
    excess = env.worst_prob_excess()
    passed = ratio <= mean_factor and excess <= 0.0
    return CheckReport("envelope", ratio, mean_factor, passed, time.perf_counter() - t0,
                       {"worst_prob_excess": excess, "D_s": env.D_s, "check": env})


SUITES = {
    "kkt": check_kkt,
    "gradients": check_gradients,
    "lyapunov": check_lyapunov,
    "contraction": check_contraction,
    "envelope": check_envelope,
    "lagrangian": check_lagrangian_structure,
    "sdc": check_sdc,
}
