"""Plant models: Lagrangian systems ``M dv + (C v + G + D) dt = u dt`` and
control-affine systems ``dv = (f + B u) dt``, plus disturbance generators.

Registered plant keys (used by scenario files):

``nonlinear_example``              2-D non-polynomial drift, B = I
``nonlinear_example_underactuated`` same drift, B = [1, 0]^T
``spacecraft_planar``              normalized planar thruster vehicle (x, y, heading)
``leo_hcw``                        Hill-Clohessy-Wiltshire relative motion, Lagrangian form
``double_integrator``              unit-mass Lagrangian point, any dimension
``two_link_arm``                   planar 2-link arm, Lagrangian with configuration-dependent M
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError


def _zeros_like_v(p, v):
    return np.zeros_like(np.asarray(v, dtype=float))


@dataclass(frozen=True, eq=False)
class LagrangianPlant:
    dim: int
    mass_matrix: Callable
    coriolis: Callable
    gravity: Callable
    damping: Callable = _zeros_like_v
    name: str = "lagrangian"
    is_lti: bool = False
    constant_mass: bool = False
    mass_matrix_partials: Optional[Callable] = None

    kind = "lagrangian"

    @property
    def dim_input(self) -> int:
        return self.dim

    def bias(self, p, v):
        """``C(p, v) v + G(p) + D(p, v)``."""
        return self.coriolis(p, v) @ v + self.gravity(p) + self.damping(p, v)

    def accel(self, p, v, u, t=0.0, d=None):
        rhs = np.asarray(u, dtype=float) - self.bias(p, v)
        if d is not None:
            rhs = rhs + d
        return np.linalg.solve(self.mass_matrix(p), rhs)

    def noise_gain(self, p, gamma):
        return np.linalg.solve(self.mass_matrix(p), gamma)

    def mass_matrix_dot(self, p, v, eps=1e-6):
        """Total derivative of ``M`` along ``p_dot = v``."""
        if self.constant_mass:
            return np.zeros((self.dim, self.dim))
        if self.mass_matrix_partials is not None:
            dM = self.mass_matrix_partials(p)
            return np.einsum("kij,k->ij", dM, v)
        p = np.asarray(p, dtype=float)
        return (self.mass_matrix(p + eps * v) - self.mass_matrix(p - eps * v)) / (2 * eps)

    def as_affine(self) -> "AffinePlant":
        """Rewrite as ``v_dot = f + B u`` with ``f = -M^-1 (C v + G + D)`` and ``B = M^-1``."""

        def drift(p, v, t=0.0):
            return -np.linalg.solve(self.mass_matrix(p), self.bias(p, v))

        def actuation(p, v, t=0.0):
            return np.linalg.inv(self.mass_matrix(p))

        return AffinePlant(self.dim, self.dim, drift, actuation, None, name=self.name + "_affine",
                           is_lti=self.is_lti)


@dataclass(frozen=True, eq=False)
class AffinePlant:
    dim_state: int
    dim_input: int
    drift: Callable
    actuation: Callable
    drift_jac_v: Optional[Callable] = None
    name: str = "affine"
    is_lti: bool = False

    kind = "affine"

    @property
    def dim(self) -> int:
        return self.dim_state

    def accel(self, p, v, u, t=0.0, d=None):
        a = self.drift(p, v, t) + self.actuation(p, v, t) @ np.asarray(u, dtype=float)
        return a if d is None else a + d

    def noise_gain(self, p, gamma):
        return gamma

    def jacobian_v(self, p, v, t=0.0, eps=1e-6):
        if self.drift_jac_v is not None:
            return self.drift_jac_v(p, v, t)
        v = np.asarray(v, dtype=float)
        n = v.size
        J = np.empty((n, n))
        for k in range(n):
            e = np.zeros(n)
            e[k] = eps
            J[:, k] = (self.drift(p, v + e, t) - self.drift(p, v - e, t)) / (2 * eps)
        return J


_GL_CACHE = {}


def _gauss_legendre_unit(order):
    if order not in _GL_CACHE:
        x, w = np.polynomial.legendre.leggauss(order)
        _GL_CACHE[order] = (0.5 * (x + 1.0), 0.5 * w)
    return _GL_CACHE[order]


def sdc_factorize(plant: AffinePlant, p, v, v_ref, t=0.0, order=8) -> np.ndarray:
    """State-dependent coefficient ``A`` with ``A (v - v_ref) = f(p, v) - f(p, v_ref)``.

    Mean-value integral of the velocity Jacobian along the segment from
    ``v_ref`` to ``v``, by ``order``-point Gauss-Legendre quadrature (exact for
    drifts polynomial in ``v`` of degree up to ``2 * order``).
    """
    v = np.asarray(v, dtype=float)
    v_ref = np.asarray(v_ref, dtype=float)
    nodes, weights = _gauss_legendre_unit(order)
    dv = v - v_ref
    A = np.zeros((v.size, v.size))
    for s, w in zip(nodes, weights):
        A += w * plant.jacobian_v(p, v_ref + s * dv, t)
    return A


# --- registered plants -------------------------------------------------------

def _nonlinear_drift(p, v, t=0.0):
    return np.array([
        np.cos(p[0]) * p[1] - v[0] + v[1],
        -np.sin(p[1]) * p[0] * v[1] + v[0] ** 2 - v[1] - 2.0 * v[0] * v[1],
    ])


def _nonlinear_drift_jac_v(p, v, t=0.0):
    return np.array([
        [-1.0, 1.0],
        [2.0 * v[0] - 2.0 * v[1], -np.sin(p[1]) * p[0] - 1.0 - 2.0 * v[0]],
    ])


def nonlinear_example_plant(underactuated=False) -> AffinePlant:
    if underactuated:
        B = np.array([[1.0], [0.0]])
        return AffinePlant(2, 1, _nonlinear_drift, lambda p, v, t=0.0: B, _nonlinear_drift_jac_v,
                           name="nonlinear_example_underactuated")
    eye = np.eye(2)
    return AffinePlant(2, 2, _nonlinear_drift, lambda p, v, t=0.0: eye, _nonlinear_drift_jac_v,
                       name="nonlinear_example")


def spacecraft_simulator_plant() -> AffinePlant:
    """Normalized planar thruster vehicle: unit mass and inertia, direct force/torque input.

    Surrogate model; the state is ``(x, y, heading)`` and every channel is a
    unit-mass double integrator.
    """
    eye = np.eye(3)
    zero = np.zeros((3, 3))
    return AffinePlant(3, 3, lambda p, v, t=0.0: np.zeros(3), lambda p, v, t=0.0: eye,
                       lambda p, v, t=0.0: zero, name="spacecraft_planar", is_lti=True)


def leo_lagrangian_plant(mean_motion: float) -> LagrangianPlant:
    """HCW relative dynamics::

        x'' - 2 n y' - 3 n^2 x = u_x
        y'' + 2 n x'          = u_y
        z'' + n^2 z           = u_z

    with ``M = I``, skew ``C`` carrying the Coriolis coupling and ``G`` the
    tidal terms.
    """
    if not mean_motion > 0:
        raise ConfigError("plant.mean_motion", f"must be > 0, got {mean_motion}")
    n = float(mean_motion)
    eye = np.eye(3)
    C = np.array([[0.0, -2 * n, 0.0], [2 * n, 0.0, 0.0], [0.0, 0.0, 0.0]])
    return LagrangianPlant(
        3,
        lambda p: eye,
        lambda p, v: C,
        lambda p: np.array([-3 * n * n * p[0], 0.0, n * n * p[2]]),
        name="leo_hcw",
        is_lti=True,
        constant_mass=True,
    )


def double_integrator_plant(dim=2) -> LagrangianPlant:
    eye = np.eye(dim)
    zero = np.zeros((dim, dim))
    return LagrangianPlant(dim, lambda p: eye, lambda p, v: zero, lambda p: np.zeros(dim),
                           name="double_integrator", is_lti=True, constant_mass=True)


def two_link_arm_plant(a=3.0, b=1.0, c=1.0, g1=2.0, g2=1.0) -> LagrangianPlant:
    """Planar two-link arm in joint coordinates; ``C`` from Christoffel symbols."""

    def M(q):
        c2 = np.cos(q[1])
        return np.array([[a + 2 * b * c2, c + b * c2], [c + b * c2, c]])

    def dM(q):
        s2 = np.sin(q[1])
        return np.array([np.zeros((2, 2)), [[-2 * b * s2, -b * s2], [-b * s2, 0.0]]])

    def C(q, dq):
        s2 = np.sin(q[1])
        return np.array([[-b * s2 * dq[1], -b * s2 * (dq[0] + dq[1])], [b * s2 * dq[0], 0.0]])

    def G(q):
        return np.array([g1 * np.cos(q[0]) + g2 * np.cos(q[0] + q[1]), g2 * np.cos(q[0] + q[1])])

    return LagrangianPlant(2, M, C, G, name="two_link_arm", mass_matrix_partials=dM)


PLANTS = {
    "nonlinear_example": lambda **kw: nonlinear_example_plant(False),
    "nonlinear_example_underactuated": lambda **kw: nonlinear_example_plant(True),
    "spacecraft_planar": lambda **kw: spacecraft_simulator_plant(),
    "leo_hcw": lambda mean_motion=0.05, **kw: leo_lagrangian_plant(mean_motion),
    "double_integrator": lambda dim=2, **kw: double_integrator_plant(dim),
    "two_link_arm": lambda **kw: two_link_arm_plant(),
}

LAGRANGIAN_KEYS = ("leo_hcw", "double_integrator", "two_link_arm")


def make_plant(key: str, **params):
    try:
        factory = PLANTS[key]
    except KeyError:
        raise ConfigError("plant", f"unknown plant key {key!r}; known: {sorted(PLANTS)}") from None
    return factory(**params)


# --- disturbances --------------------------------------------------------------

PROFILES = ("constant-direction", "sinusoidal", "worst-case-radial")


@dataclass(frozen=True)
class DisturbanceSpec:
    """Bounded deterministic force plus a constant diffusion matrix.

    ``|d| <= d_bar`` for every query and ``|Gamma|_F = gamma_bar``.
    """

    d_bar: float = 0.0
    gamma_bar: float = 0.0
    d_profile: str = "constant-direction"
    seed: int = 0
    frequency: float = 1.0

    def __post_init__(self):
        if not self.d_bar >= 0:
            raise ConfigError("disturbance.d_bar", f"must be >= 0, got {self.d_bar}")
        if not self.gamma_bar >= 0:
            raise ConfigError("disturbance.gamma_bar", f"must be >= 0, got {self.gamma_bar}")
        if self.d_profile not in PROFILES:
            raise ConfigError("disturbance.d_profile", f"must be one of {PROFILES}, got {self.d_profile!r}")

    def _direction(self, agent, n):
        rng = np.random.default_rng([self.seed, agent, 7919])
        u = rng.standard_normal(n)
        return u / np.linalg.norm(u), rng.uniform(0, 2 * np.pi)

    def force(self, p, v, t, agent=0, push=None) -> np.ndarray:
        """Deterministic disturbance for one agent.

        ``push`` is the direction from the agent toward its nearest object;
        the worst-case-radial profile drives the agent along it.
        """
        n = np.asarray(p).size
        if self.d_bar == 0.0:
            return np.zeros(n)
        if self.d_profile == "worst-case-radial":
            if push is None:
                return np.zeros(n)
            nrm = np.linalg.norm(push)
            return np.zeros(n) if nrm == 0 else self.d_bar * np.asarray(push) / nrm
        direction, phase = self._direction(agent, n)
        if self.d_profile == "sinusoidal":
            return self.d_bar * np.sin(2 * np.pi * self.frequency * t + phase) * direction
        return self.d_bar * direction

    def diffusion(self, n) -> np.ndarray:
        return (self.gamma_bar / np.sqrt(n)) * np.eye(n)

    @property
    def is_zero(self) -> bool:
        return self.d_bar == 0.0 and self.gamma_bar == 0.0


def propagate(plant, p, v, u, dt, substeps=10, force=None, noise=None, t=0.0, path=None):
    """Advance one zero-order-hold control interval with semi-implicit Euler substeps.

    ``force`` is held over the interval; ``noise`` is an optional
    ``(substeps, n)`` array of velocity increments already scaled by the
    diffusion gain and ``sqrt(dt / substeps)``.  Substep positions are
    appended to ``path`` when a list is given.
    """
    h = dt / substeps
    p = np.array(p, dtype=float)
    v = np.array(v, dtype=float)
    for k in range(substeps):
        v = v + h * plant.accel(p, v, u, t + k * h, force)
        if noise is not None:
            v = v + noise[k]
        p = p + h * v
        if path is not None:
            path.append(p)
    return p, v


def hold_input(plant, p) -> np.ndarray:
    """Input that keeps the plant at rest at ``p`` (least squares for under-actuated plants)."""
    p = np.asarray(p, dtype=float)
    zero = np.zeros_like(p)
    if plant.kind == "lagrangian":
        return plant.bias(p, zero)
    B = np.asarray(plant.actuation(p, zero, 0.0), dtype=float).reshape(p.size, -1)
    return np.linalg.lstsq(B, -plant.drift(p, zero, 0.0), rcond=None)[0]


def inverse_dynamics(plant, p, v, a_cmd, t=0.0) -> np.ndarray:
    """Input realizing acceleration ``a_cmd`` (least squares when under-actuated)."""
    if plant.kind == "lagrangian":
        return plant.mass_matrix(p) @ a_cmd + plant.bias(p, v)
    B = np.asarray(plant.actuation(p, v, t), dtype=float).reshape(plant.dim_state, -1)
    return np.linalg.lstsq(B, a_cmd - plant.drift(p, v, t), rcond=None)[0]


def discrete_lti(plant, dt, substeps=10):
    """Exact one-tick map ``x+ = Phi x + Gam u + c`` of :func:`propagate` for LTI plants."""
    n, m = plant.dim, plant.dim_input
    c_p, c_v = propagate(plant, np.zeros(n), np.zeros(n), np.zeros(m), dt, substeps)
    c = np.concatenate([c_p, c_v])
    Phi = np.empty((2 * n, 2 * n))
    for k in range(2 * n):
        x = np.zeros(2 * n)
        x[k] = 1.0
        pn, vn = propagate(plant, x[:n], x[n:], np.zeros(m), dt, substeps)
        Phi[:, k] = np.concatenate([pn, vn]) - c
    Gam = np.empty((2 * n, m))
    for k in range(m):
        u = np.zeros(m)
        u[k] = 1.0
        pn, vn = propagate(plant, np.zeros(n), np.zeros(n), u, dt, substeps)
        Gam[:, k] = np.concatenate([pn, vn]) - c
    return Phi, Gam, c
