import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from cart.dynamics import (PLANTS, AffinePlant, DisturbanceSpec, discrete_lti, make_plant, propagate,
                           sdc_factorize)
from cart.errors import ConfigError


def test_zero_everything_is_a_fixed_point():
    for key in ("double_integrator", "spacecraft_planar", "nonlinear_example"):
        plant = make_plant(key)
        n = plant.dim
        p0 = np.zeros(n)
        p, v = propagate(plant, p0, np.zeros(n), np.zeros(plant.dim_input), 0.1)
        assert np.array_equal(p, p0) and np.array_equal(v, np.zeros(n))


def _euler_error(substeps):
    plant = make_plant("nonlinear_example")
    p0, v0 = np.array([0.5, -0.3]), np.array([0.2, 0.4])
    u = np.array([0.1, -0.2])

    def rhs(t, x):
        return np.concatenate([x[2:], plant.accel(x[:2], x[2:], u, t)])

    ref = solve_ivp(rhs, (0, 1.0), np.concatenate([p0, v0]), method="RK45", rtol=1e-11, atol=1e-12).y[:, -1]
    p, v = p0, v0
    for k in range(10):
        p, v = propagate(plant, p, v, u, 0.1, substeps=substeps, t=0.1 * k)
    return np.abs(np.concatenate([p, v]) - ref).max()


def test_semi_implicit_euler_converges_first_order():
    e1, e2, e3 = _euler_error(10), _euler_error(20), _euler_error(40)
    assert e1 < 0.05
    assert 0.4 < e2 / e1 < 0.6 and 0.4 < e3 / e2 < 0.6


def test_brownian_velocity_variance():
    n, paths, sigma, dt, substeps, ticks = 2, 10_000, 0.3, 0.1, 10, 10
    plant = AffinePlant(n, n, lambda p, v, t=0.0: np.zeros_like(v), lambda p, v, t=0.0: np.eye(n))
    rng = np.random.default_rng(1)
    gamma = sigma * np.eye(n)
    p, v = np.zeros((n, paths)), np.zeros((n, paths))
    h = dt / substeps
    for _ in range(ticks):
        noise = np.einsum("ij,sjk->sik", gamma, rng.standard_normal((substeps, n, paths))) * np.sqrt(h)
        p, v = propagate(plant, p, v, np.zeros((n, paths)), dt, substeps, noise=noise)
    var = v.var(axis=1)
    assert np.all(np.abs(var / (sigma**2 * dt * ticks) - 1) < 0.05)


def _arm_energy(plant, p, v, g1=2.0, g2=1.0):
    return 0.5 * v @ plant.mass_matrix(p) @ v + g1 * np.sin(p[0]) + g2 * np.sin(p[0] + p[1])


def test_conservative_arm_energy_drift_is_first_order():
    plant = make_plant("two_link_arm")
    drifts = []
    for substeps in (10, 20, 40):
        p, v = np.array([0.3, 0.5]), np.array([0.0, 0.0])
        E0 = _arm_energy(plant, p, v)
        worst = 0.0
        for _ in range(20):
            p, v = propagate(plant, p, v, np.zeros(2), 0.1, substeps)
            worst = max(worst, abs(_arm_energy(plant, p, v) - E0))
        drifts.append(worst)
    assert drifts[1] < 0.65 * drifts[0] and drifts[2] < 0.65 * drifts[1]


def test_discrete_lti_matches_propagation():
    plant = make_plant("leo_hcw")
    Phi, Gam, c = discrete_lti(plant, 0.1, 10)
    rng = np.random.default_rng(0)
    p, v, u = rng.standard_normal((3, 3))
    p1, v1 = propagate(plant, p, v, u, 0.1, 10)
    x1 = Phi @ np.concatenate([p, v]) + Gam @ u + c
    assert np.allclose(x1, np.concatenate([p1, v1]), atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**31))
def test_sdc_identity_on_quadratic_drift(seed):
    rng = np.random.default_rng(seed)
    plant = make_plant("nonlinear_example")
    p, v, vr = rng.uniform(-3, 3, (3, 2))
    A = sdc_factorize(plant, p, v, vr)
    assert np.linalg.norm(A @ (v - vr) - (plant.drift(p, v) - plant.drift(p, vr))) <= 1e-10


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from(["constant-direction", "sinusoidal", "worst-case-radial"]))
def test_disturbance_bounds(seed, profile):
    rng = np.random.default_rng(seed)
    d_bar, g_bar = rng.uniform(0, 2, 2)
    spec = DisturbanceSpec(d_bar, g_bar, profile, seed=int(seed % 1000))
    n = int(rng.integers(1, 5))
    f = spec.force(rng.standard_normal(n), rng.standard_normal(n), rng.uniform(0, 10), push=rng.standard_normal(n))
    assert np.linalg.norm(f) <= d_bar * (1 + 1e-12)
    assert np.linalg.norm(spec.diffusion(n)) == pytest.approx(g_bar)


def test_radial_profile_points_along_push():
    spec = DisturbanceSpec(0.5, 0.0, "worst-case-radial")
    assert np.allclose(spec.force(np.zeros(2), np.zeros(2), 0.0, push=np.array([0.0, 2.0])), [0.0, 0.5])
    assert np.allclose(spec.force(np.zeros(2), np.zeros(2), 0.0), 0.0)


def test_registry_and_validation():
    assert {"nonlinear_example", "leo_hcw", "spacecraft_planar"} <= set(PLANTS)
    with pytest.raises(ConfigError):
        make_plant("warp_drive")
    with pytest.raises(ConfigError):
        make_plant("leo_hcw", mean_motion=-1.0)
    with pytest.raises(ConfigError):
        DisturbanceSpec(-1.0)
    with pytest.raises(ConfigError):
        DisturbanceSpec(0.1, 0.1, "gusty")
