"""Scenario files: TOML with a versioned schema.

Layout (every table except ``plant``, ``safety`` and ``agents`` is optional)::

    schema_version = 1
    name = "demo"

    [plant]          key = "leo_hcw"
    [plant_params]   mean_motion = 0.05
    [safety]         r_s, delta_r_s, r_sen, xi (diagonal list or matrix)
    [gains]          k_p, k_v, q_margin, relaxation, u_bar_variant, general_variant, R
    [robust]         lambda_r, k_r, epsilon_d, auto_margin_probability
    [disturbance]    d_bar, gamma_bar, profile, seed, frequency
    [policy]         kind, error_magnitude, reference, tracking_kp, tracking_kd,
                     perturbation_frequency, replan_period, target_window, error_taper
    [policy.qp]      alpha_h, alpha_V, rho_weight, input_box_limit, mu, lambda_clf
    [agents]         initial_positions, goal_positions, initial_velocities
    [obstacles]      positions
    [sim]            dt, horizon, substeps, n_monte_carlo, seed, goal_tolerance,
                     randomize, randomize_box = [low, high]
    [planner]        ticks_per_knot, clearance_buffer

Unknown keys are rejected so typos surface as :class:`ConfigError`.
"""
from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from .baselines import PolicySpec, QPParams
from .dynamics import DisturbanceSpec
from .errors import ConfigError
from .gains import FilterGains, RobustGains
from .sim import ScenarioSpec
from .world import SafetyConfig

SCHEMA_VERSION = 1

_KEYS = {
    "plant": {"key"},
    "safety": {"r_s", "delta_r_s", "r_sen", "xi"},
    "gains": {"k_p", "k_v", "q_margin", "relaxation", "u_bar_variant", "general_variant", "R", "residual_tol"},
    "robust": {"lambda_r", "k_r", "epsilon_d", "auto_margin_probability"},
    "disturbance": {"d_bar", "gamma_bar", "profile", "seed", "frequency"},
    "policy": {"kind", "error_magnitude", "reference", "tracking_kp", "tracking_kd", "perturbation_frequency",
               "replan_period", "target_window", "error_taper", "qp"},
    "qp": {"alpha_h", "alpha_V", "rho_weight", "input_box_limit", "mu", "lambda_clf"},
    "agents": {"initial_positions", "goal_positions", "initial_velocities"},
    "obstacles": {"positions"},
    "sim": {"dt", "horizon", "substeps", "n_monte_carlo", "seed", "goal_tolerance", "randomize", "randomize_box"},
    "planner": {"ticks_per_knot", "clearance_buffer"},
}
_TOP = {"schema_version", "name", "plant_params"} | set(_KEYS) - {"qp"}


def _check_keys(table: dict, section: str):
    if not isinstance(table, dict):
        raise ConfigError(section, "must be a table")
    extra = set(table) - _KEYS[section]
    if extra:
        raise ConfigError(f"{section}.{sorted(extra)[0]}", "unknown key")


def _get(table, key, default, section, cast=float):
    if key not in table:
        return default
    try:
        return cast(table[key])
    except (TypeError, ValueError):
        raise ConfigError(f"{section}.{key}", f"cannot interpret {table[key]!r}") from None


def _array(value, field):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(field, "must be numeric") from None
    if not np.all(np.isfinite(arr)):
        raise ConfigError(field, "must be finite")
    return arr


def scenario_from_dict(data: dict) -> ScenarioSpec:
    extra = set(data) - _TOP
    if extra:
        raise ConfigError(sorted(extra)[0], "unknown top-level key")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"expected {SCHEMA_VERSION}, got {version!r}")
    for section in ("plant", "safety", "agents"):
        if section not in data:
            raise ConfigError(section, "missing required table")
    for section in _KEYS:
        if section in data:
            _check_keys(data[section], section)

    plant = data["plant"]
    if "key" not in plant:
        raise ConfigError("plant.key", "missing")
    agents = data["agents"]
    for key in ("initial_positions", "goal_positions"):
        if key not in agents:
            raise ConfigError(f"agents.{key}", "missing")
    P0 = np.atleast_2d(_array(agents["initial_positions"], "agents.initial_positions"))
    n = P0.shape[1]

    s = data["safety"]
    for key in ("r_s", "r_sen"):
        if key not in s:
            raise ConfigError(f"safety.{key}", "missing")
    xi = s.get("xi")
    safety = SafetyConfig(_get(s, "r_s", None, "safety"), _get(s, "delta_r_s", 0.0, "safety"),
                          _get(s, "r_sen", None, "safety"),
                          None if xi is None else _array(xi, "safety.xi"), dim=n)

    g = data.get("gains", {})
    gains = FilterGains(
        k_p=_get(g, "k_p", 1.0, "gains"), k_v=_get(g, "k_v", 1.0, "gains"),
        R=None if "R" not in g else _array(g["R"], "gains.R"),
        q_margin=_get(g, "q_margin", 1.0, "gains"),
        u_bar_variant=_get(g, "u_bar_variant", "revised", "gains", str),
        general_variant=_get(g, "general_variant", "damped", "gains", str),
        residual_tol=_get(g, "residual_tol", 1e-6, "gains"),
        relaxation=_get(g, "relaxation", 0.0, "gains"))

    r = data.get("robust", {})
    lam = r.get("lambda_r", 1.0)
    robust = RobustGains(_array(lam, "robust.lambda_r") if isinstance(lam, list) else float(lam),
                         _get(r, "k_r", 1.0, "robust"), _get(r, "epsilon_d", 1.0, "robust"))

    d = data.get("disturbance", {})
    dist = DisturbanceSpec(_get(d, "d_bar", 0.0, "disturbance"), _get(d, "gamma_bar", 0.0, "disturbance"),
                           _get(d, "profile", "constant-direction", "disturbance", str),
                           _get(d, "seed", 0, "disturbance", int), _get(d, "frequency", 1.0, "disturbance"))

    p = data.get("policy", {})
    q = p.get("qp", {})
    _check_keys(q, "qp")
    qp = QPParams(**{k: float(v) for k, v in q.items()})
    policy = PolicySpec(
        kind=_get(p, "kind", "cart_safety_only", "policy", str),
        error_magnitude=_get(p, "error_magnitude", 0.0, "policy"), qp_params=qp,
        reference=_get(p, "reference", "plan", "policy", str),
        tracking_kp=_get(p, "tracking_kp", 1.0, "policy"), tracking_kd=_get(p, "tracking_kd", 2.0, "policy"),
        perturbation_frequency=_get(p, "perturbation_frequency", 0.2, "policy"),
        replan_period=_get(p, "replan_period", 10, "policy", int),
        target_window=_get(p, "target_window", 20, "policy", int),
        error_taper=_get(p, "error_taper", 0.0, "policy"))

    sim = data.get("sim", {})
    box = sim.get("randomize_box")
    if box is not None:
        box = _array(box, "sim.randomize_box")
        if box.shape != (2, n):
            raise ConfigError("sim.randomize_box", f"must be [low, high] with {n} entries each")
        box = (box[0], box[1])
    planner = data.get("planner", {})
    obstacles = data.get("obstacles", {}).get("positions")
    return ScenarioSpec(
        plant_key=str(plant["key"]),
        initial_positions=P0,
        goal_positions=_array(agents["goal_positions"], "agents.goal_positions"),
        safety=safety,
        initial_velocities=None if "initial_velocities" not in agents
        else _array(agents["initial_velocities"], "agents.initial_velocities"),
        obstacles=None if not obstacles else _array(obstacles, "obstacles.positions"),
        plant_params=dict(data.get("plant_params", {})),
        gains=gains, robust=robust, disturbance=dist, policy=policy,
        dt=_get(sim, "dt", 0.1, "sim"), horizon=_get(sim, "horizon", 10.0, "sim"),
        substeps=_get(sim, "substeps", 10, "sim", int),
        n_monte_carlo=_get(sim, "n_monte_carlo", 1, "sim", int), seed=_get(sim, "seed", 0, "sim", int),
        goal_tolerance=_get(sim, "goal_tolerance", 0.1, "sim"),
        randomize=_get(sim, "randomize", False, "sim", bool), randomize_box=box,
        plan_ticks_per_knot=_get(planner, "ticks_per_knot", None, "planner", int),
        plan_clearance_buffer=_get(planner, "clearance_buffer", 0.1, "planner"),
        auto_margin_probability=_get(r, "auto_margin_probability", None, "robust"),
        name=str(data.get("name", "scenario")))


def _list(a):
    return np.asarray(a, dtype=float).tolist()


def scenario_to_dict(spec: ScenarioSpec) -> dict:
    """Inverse of :func:`scenario_from_dict` (round-trips every field)."""
    g, r, d, p = spec.gains, spec.robust, spec.disturbance, spec.policy
    q = p.qp_params
    xi = spec.safety.xi
    out = {
        "schema_version": SCHEMA_VERSION,
        "name": spec.name,
        "plant": {"key": spec.plant_key},
        "plant_params": dict(spec.plant_params),
        "safety": {"r_s": spec.safety.r_s, "delta_r_s": spec.safety.delta_r_s, "r_sen": spec.safety.r_sen,
                   "xi": _list(np.diag(xi)) if np.allclose(xi, np.diag(np.diag(xi))) else _list(xi)},
        "gains": {"k_p": g.k_p, "k_v": g.k_v, "q_margin": g.q_margin, "relaxation": g.relaxation,
                  "u_bar_variant": g.u_bar_variant, "general_variant": g.general_variant,
                  "residual_tol": g.residual_tol},
        "robust": {"lambda_r": _list(r.lambda_r) if isinstance(r.lambda_r, np.ndarray) else r.lambda_r,
                   "k_r": r.k_r, "epsilon_d": r.epsilon_d},
        "disturbance": {"d_bar": d.d_bar, "gamma_bar": d.gamma_bar, "profile": d.d_profile, "seed": d.seed,
                        "frequency": d.frequency},
        "policy": {"kind": p.kind, "error_magnitude": p.error_magnitude, "reference": p.reference,
                   "tracking_kp": p.tracking_kp, "tracking_kd": p.tracking_kd,
                   "perturbation_frequency": p.perturbation_frequency, "replan_period": p.replan_period,
                   "target_window": p.target_window, "error_taper": p.error_taper,
                   "qp": {"alpha_h": q.alpha_h, "alpha_V": q.alpha_V, "rho_weight": q.rho_weight,
                          "input_box_limit": q.input_box_limit, "mu": q.mu, "lambda_clf": q.lambda_clf}},
        "agents": {"initial_positions": _list(spec.initial_positions),
                   "goal_positions": _list(spec.goal_positions),
                   "initial_velocities": _list(spec.initial_velocities)},
        "sim": {"dt": spec.dt, "horizon": spec.horizon, "substeps": spec.substeps,
                "n_monte_carlo": spec.n_monte_carlo, "seed": spec.seed, "goal_tolerance": spec.goal_tolerance,
                "randomize": spec.randomize},
        "planner": {"clearance_buffer": spec.plan_clearance_buffer},
    }
    if g.R is not None:
        out["gains"]["R"] = _list(g.R)
    if spec.auto_margin_probability is not None:
        out["robust"]["auto_margin_probability"] = spec.auto_margin_probability
    if len(spec.obstacles):
        out["obstacles"] = {"positions": _list(spec.obstacles)}
    if spec.randomize_box is not None:
        out["sim"]["randomize_box"] = [_list(spec.randomize_box[0]), _list(spec.randomize_box[1])]
    if spec.plan_ticks_per_knot is not None:
        out["planner"]["ticks_per_knot"] = spec.plan_ticks_per_knot
    return out


def _parse_value(text: str):
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``section.key=value`` strings; values are parsed as TOML literals, else kept as strings."""
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(item, "override must look like section.key=value")
        path, text = item.split("=", 1)
        keys = path.strip().split(".")
        node = data
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(path, "cannot descend into a non-table value")
        node[keys[-1]] = _parse_value(text.strip())
    return data


def read_scenario_dict(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"invalid TOML: {exc}") from None


def load_scenario(path, overrides=None) -> ScenarioSpec:
    return scenario_from_dict(apply_overrides(read_scenario_dict(path), overrides))


def dumps_scenario(spec: ScenarioSpec) -> str:
    return tomli_w.dumps(scenario_to_dict(spec))


def save_scenario(spec: ScenarioSpec, path):
    Path(path).write_text(dumps_scenario(spec))


def canned_names() -> list:
    root = resources.files("cart") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def canned_dict(name: str) -> dict:
    root = resources.files("cart") / "scenarios"
    f = root / f"{name}.toml"
    if not f.is_file():
        raise ConfigError("scenario", f"unknown canned scenario {name!r}; known: {canned_names()}")
    return tomli.loads(f.read_text())


def canned(name: str, overrides=None) -> ScenarioSpec:
    return scenario_from_dict(apply_overrides(canned_dict(name), overrides))


def resolve(name_or_path, overrides=None) -> ScenarioSpec:
    """A canned scenario name or a path to a TOML file."""
    p = Path(name_or_path)
    if p.suffix == ".toml" or p.exists():
        return load_scenario(p, overrides)
    return canned(str(name_or_path), overrides)
