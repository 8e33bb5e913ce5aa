"""State containers, local sensing and the global safety product.

Sensing uses the plain Euclidean norm; only the clearance function ``h``
uses the ellipsoidal weight ``xi``.  Obstacles are static points that enter
``h`` exactly like agents do.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


def _as_vector(x, name="vector"):
    arr = np.array(x, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ConfigError(name, "entries must be finite")
    return arr


@dataclass(frozen=True, eq=False)
class AgentState:
    """Generalized position ``p`` and velocity ``v`` of one agent."""

    p: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        p = _as_vector(self.p, "AgentState.p")
        v = _as_vector(self.v, "AgentState.v")
        if p.size < 1 or p.shape != v.shape:
            raise ConfigError("AgentState", f"p and v must share length n >= 1, got {p.shape} and {v.shape}")
        p.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "v", v)

    @property
    def dim(self) -> int:
        return self.p.size


@dataclass(frozen=True, eq=False)
class SafetyConfig:
    """Barrier geometry: safe radius, robustness margin, sensing radius and ellipsoid weight."""

    r_s: float
    delta_r_s: float
    r_sen: float
    xi: np.ndarray = None
    dim: int = None

    def __post_init__(self):
        if not self.r_s > 0:
            raise ConfigError("safety.r_s", f"must be > 0, got {self.r_s}")
        if not self.delta_r_s >= 0:
            raise ConfigError("safety.delta_r_s", f"must be >= 0, got {self.delta_r_s}")
        if not self.r_sen - (self.r_s + self.delta_r_s) > 0:
            raise ConfigError(
                "safety.r_sen",
                f"SafetyConfig invariant r_sen - (r_s + delta_r_s) > 0 violated "
                f"(r_sen={self.r_sen}, r_s={self.r_s}, delta_r_s={self.delta_r_s})",
            )
        xi = self.xi
        if xi is None:
            if self.dim is None:
                raise ConfigError("safety.xi", "either xi or dim must be given")
            xi = np.eye(self.dim)
        xi = np.array(xi, dtype=float)
        if xi.ndim == 1:
            xi = np.diag(xi)
        if xi.ndim != 2 or xi.shape[0] != xi.shape[1]:
            raise ConfigError("safety.xi", f"must be a square matrix, got shape {xi.shape}")
        if not np.allclose(xi, xi.T, atol=1e-12):
            raise ConfigError("safety.xi", "must be symmetric")
        eig = np.linalg.eigvalsh(xi)
        if eig[0] <= 0:
            raise ConfigError("safety.xi", f"must be positive definite, min eigenvalue {eig[0]:.3e}")
        if eig[-1] > 1.0 + 1e-12:
            raise ConfigError("safety.xi", f"largest eigenvalue must be <= 1, got {eig[-1]:.6f}")
        xi.flags.writeable = False
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "dim", xi.shape[0])

    @property
    def inflated_radius(self) -> float:
        return self.r_s + self.delta_r_s

    @property
    def span(self) -> float:
        """Denominator of ``h``: distance between the inflated radius and the sensing radius."""
        return self.r_sen - self.inflated_radius

    def with_margin(self, delta_r_s) -> "SafetyConfig":
        return SafetyConfig(self.r_s, float(delta_r_s), self.r_sen, self.xi)


@dataclass(frozen=True, eq=False)
class World:
    agents: tuple
    obstacles: np.ndarray = None
    time: float = 0.0

    def __post_init__(self):
        agents = tuple(self.agents)
        if len(agents) < 1:
            raise ConfigError("World.agents", "need at least one agent")
        n = agents[0].dim
        if any(a.dim != n for a in agents):
            raise ConfigError("World.agents", "all agents must share the same dimension")
        obs = np.zeros((0, n)) if self.obstacles is None else np.array(self.obstacles, dtype=float).reshape(-1, n)
        if obs.shape[1] != n:
            raise ConfigError("World.obstacles", f"obstacle dimension must be {n}")
        obs.flags.writeable = False
        object.__setattr__(self, "agents", agents)
        object.__setattr__(self, "obstacles", obs)
        object.__setattr__(self, "time", float(self.time))

    @classmethod
    def from_arrays(cls, P, V, obstacles=None, time=0.0) -> "World":
        return cls(tuple(AgentState(p, v) for p, v in zip(P, V)), obstacles, time)

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def dim(self) -> int:
        return self.agents[0].dim

    def positions(self) -> np.ndarray:
        return np.array([a.p for a in self.agents])

    def velocities(self) -> np.ndarray:
        return np.array([a.v for a in self.agents])


@dataclass(frozen=True, eq=False)
class Observation:
    """Local view of one agent: own state plus in-range neighbors, ordered by index."""

    self_state: AgentState
    neighbor_agents: tuple = ()
    neighbor_obstacles: tuple = ()
    time: float = 0.0
    self_index: int = 0

    @property
    def n_objects(self) -> int:
        return len(self.neighbor_agents) + len(self.neighbor_obstacles)

    def relative_positions(self) -> np.ndarray:
        """Rows ``p^j - p^i`` for neighbor agents first, then obstacles."""
        p = self.self_state.p
        rows = [s.p - p for _, s in self.neighbor_agents] + [q - p for _, q in self.neighbor_obstacles]
        if not rows:
            return np.zeros((0, p.size))
        return np.array(rows)

    def neighbor_velocities(self) -> list:
        return [s.v for _, s in self.neighbor_agents]

    def relative_velocities(self, neighbor_velocities=None) -> np.ndarray:
        """Rows ``v^j - v^i``; obstacles are static."""
        v = self.self_state.v
        if neighbor_velocities is None:
            neighbor_velocities = self.neighbor_velocities()
        if len(neighbor_velocities) != len(self.neighbor_agents):
            raise ValueError("neighbor velocity list must align with neighbor_agents")
        rows = [np.asarray(vj, dtype=float) - v for vj in neighbor_velocities]
        rows += [-v] * len(self.neighbor_obstacles)
        if not rows:
            return np.zeros((0, v.size))
        return np.array(rows)

    def object_keys(self) -> list:
        return [("agent", j) for j, _ in self.neighbor_agents] + [("obstacle", j) for j, _ in self.neighbor_obstacles]


def observe(world: World, agent_index: int, cfg: SafetyConfig) -> Observation:
    N = world.n_agents
    if not 0 <= agent_index < N:
        raise IndexError(f"agent index {agent_index} out of range for {N} agents")
    me = world.agents[agent_index]
    agents = []
    for j, other in enumerate(world.agents):
        if j != agent_index and np.linalg.norm(other.p - me.p) <= cfg.r_sen:
            agents.append((j, other))
    obstacles = []
    for j, q in enumerate(world.obstacles):
        if np.linalg.norm(q - me.p) <= cfg.r_sen:
            obstacles.append((j, np.array(q)))
    return Observation(me, tuple(agents), tuple(obstacles), world.time, agent_index)


def observe_all(world: World, cfg: SafetyConfig) -> list:
    return [observe(world, i, cfg) for i in range(world.n_agents)]


def xi_norm(x, xi) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.sqrt(np.einsum("...i,ij,...j->...", x, xi, x))


def _in_range_pairs(world: World, cfg: SafetyConfig):
    P = world.positions()
    agent_pairs, obstacle_pairs = [], []
    for i in range(world.n_agents):
        for j in range(i + 1, world.n_agents):
            if np.linalg.norm(P[j] - P[i]) <= cfg.r_sen:
                agent_pairs.append(P[j] - P[i])
        for q in world.obstacles:
            if np.linalg.norm(q - P[i]) <= cfg.r_sen:
                obstacle_pairs.append(q - P[i])
    return agent_pairs, obstacle_pairs


def global_safety_product(world: World, cfg: SafetyConfig) -> float:
    """Product of ``h`` over in-range unordered agent pairs and agent-obstacle pairs.

    Returns 1.0 for the empty product.
    """
    from .barrier import eval_h

    agent_pairs, obstacle_pairs = _in_range_pairs(world, cfg)
    out = 1.0
    for rel in agent_pairs + obstacle_pairs:
        out *= eval_h(rel, cfg)
    return float(out)


def global_psi(world: World, cfg: SafetyConfig) -> float:
    """``-log`` of :func:`global_safety_product`; agent pairs counted once."""
    from .barrier import eval_h

    agent_pairs, obstacle_pairs = _in_range_pairs(world, cfg)
    hs = np.array([eval_h(rel, cfg) for rel in agent_pairs + obstacle_pairs])
    if hs.size and hs.min() <= 0:
        return np.inf
    return float(-np.sum(np.log(hs))) if hs.size else 0.0


def pairwise_clearance(P, obstacles, r_s, r_sen, xi) -> float:
    """Smallest physical clearance ``(|p_ij|_xi - r_s)/(r_sen - r_s)`` over all pairs.

    Ignores sensing range and the robustness margin; this is the quantity
    whose sign decides whether a collision happened.
    """
    P = np.asarray(P, dtype=float)
    vals = []
    N = P.shape[0]
    if N > 1:
        diff = P[None, :, :] - P[:, None, :]
        iu = np.triu_indices(N, 1)
        vals.append(xi_norm(diff[iu], xi))
    if obstacles is not None and len(obstacles):
        diff = np.asarray(obstacles)[None, :, :] - P[:, None, :]
        vals.append(xi_norm(diff.reshape(-1, P.shape[1]), xi))
    if not vals:
        return np.inf
    d = np.min(np.concatenate(vals))
    return float((d - r_s) / (r_sen - r_s))
