import numpy as np
import pytest
from scipy.integrate import solve_ivp

from levelset_sampler import (
    ABAR,
    ProjectionConfig,
    circle_coordinate,
    compute_kernel,
    flow_rhs,
    project,
    torus_embed,
    torus_grad_xi,
    torus_xi,
)
from conftest import free_spec

TWO_PI = 2.0 * np.pi


def test_flow_rhs_vanishes_on_surface(torus_rc):
    rhs = flow_rhs(torus_rc, free_spec(3), 0.5, np.array([1.5, 0.0, 0.0]))
    np.testing.assert_array_equal(rhs, np.zeros(3))


def test_flow_rhs_circle_hand_value():
    # kappa = 0: -xi * grad xi = -(1.5) * (2, 0)
    rhs = flow_rhs(circle_coordinate(), free_spec(2), 0.0, np.array([2.0, 0.0]))
    np.testing.assert_allclose(rhs, [-3.0, 0.0], atol=1e-14)


def test_flow_rhs_kappa_rescales_direction_only():
    circle = circle_coordinate()
    x = np.array([2.0, 0.0])
    base = flow_rhs(circle, free_spec(2), 0.0, x)
    for kappa in (0.3, 0.5, 0.9, 0.999):
        v = flow_rhs(circle, free_spec(2), kappa, x)
        cos = v @ base / (np.linalg.norm(v) * np.linalg.norm(base))
        assert cos == pytest.approx(1.0, abs=1e-12)


def test_project_fixed_point_on_surface(torus_rc, test1):
    res = project(torus_rc, test1.dynamics(), ProjectionConfig(), np.array([1.5, 0.0, 0.0]))
    assert res.converged and res.rk_steps == 0
    np.testing.assert_array_equal(res.point, [1.5, 0.0, 0.0])


def test_project_axis_point_against_ode_oracle(torus_rc, test1):
    # By symmetry the flow from (1.6, 0, 0) stays on the x1 axis; the nearest
    # root of xi on that ray is x1 = R + r = 1.5.  Cross-check with an
    # independent stiff integrator of the kappa=0 flow.
    res = project(torus_rc, test1.dynamics(), ProjectionConfig(), np.array([1.6, 0.0, 0.0]))
    assert res.converged
    np.testing.assert_allclose(res.point, [1.5, 0.0, 0.0], atol=1e-6)

    sol = solve_ivp(
        lambda t, y: -torus_xi(y) * torus_grad_xi(y),
        (0.0, 20.0),
        np.array([1.6, 0.0, 0.0]),
        method="LSODA",
        rtol=1e-11,
        atol=1e-13,
    )
    np.testing.assert_allclose(res.point, sol.y[:, -1], atol=1e-6)


def test_project_output_on_surface(torus_rc, test1, rng):
    cfg = ProjectionConfig()
    dyn = test1.dynamics(A=ABAR)
    for _ in range(200):
        x = torus_embed(*rng.uniform(0.0, TWO_PI, 2)) + rng.normal(scale=0.05, size=3)
        res = project(torus_rc, dyn, cfg, x)
        assert res.converged
        assert abs(torus_xi(res.point)) < cfg.eps_tol


def test_project_idempotent(torus_rc, test1, rng):
    cfg = ProjectionConfig()
    dyn = test1.dynamics(A=ABAR)
    for _ in range(1000):
        x = torus_embed(*rng.uniform(0.0, TWO_PI, 2)) + rng.normal(scale=0.03, size=3)
        first = project(torus_rc, dyn, cfg, x)
        second = project(torus_rc, dyn, cfg, first.point)
        assert np.linalg.norm(second.point - first.point) < 10.0 * cfg.eps_tol


def test_project_limit_independent_of_kappa(torus_rc, test1, rng):
    dyn = test1.dynamics(A=ABAR)
    for _ in range(100):
        x = torus_embed(*rng.uniform(0.0, TWO_PI, 2)) + rng.uniform(-0.1, 0.1, size=3)
        p0 = project(torus_rc, dyn, ProjectionConfig(kappa=0.0), x)
        p5 = project(torus_rc, dyn, ProjectionConfig(kappa=0.5), x)
        assert p0.converged and p5.converged
        np.testing.assert_allclose(p0.point, p5.point, atol=1e-5)


def test_kappa_zero_lyapunov_decay(torus_rc, test1, rng):
    # the half-squared constraint decreases from start to finish of every
    # converged kappa = 0 integration
    cfg = ProjectionConfig(kappa=0.0)
    dyn = test1.dynamics()
    for _ in range(100):
        x = torus_embed(*rng.uniform(0.0, TWO_PI, 2)) + rng.uniform(-0.1, 0.1, size=3)
        f0 = 0.5 * torus_xi(x) ** 2
        res = project(torus_rc, dyn, cfg, x)
        assert res.converged
        assert 0.5 * res.final_xi_norm**2 < f0


def test_jacobian_of_projection_equals_projector(torus_rc, test1):
    # differentiating through the projection demands much more endpoint
    # accuracy than sampling does
    cfg = ProjectionConfig(eps_tol=1e-10, error_tol=1e-12)
    x = torus_embed(0.9, 2.2)
    fd = 1e-4
    for A in (None, ABAR):
        dyn = test1.dynamics(A=A)
        jac = np.empty((3, 3))
        for j in range(3):
            xp, xm = x.copy(), x.copy()
            xp[j] += fd
            xm[j] -= fd
            jac[:, j] = (
                project(torus_rc, dyn, cfg, xp).point - project(torus_rc, dyn, cfg, xm).point
            ) / (2 * fd)
        P = compute_kernel(torus_rc, dyn, x).P
        np.testing.assert_allclose(jac, P, atol=1e-4)
        asym = np.max(np.abs(jac - jac.T))
        if A is None:
            assert asym < 1e-4
        else:
            assert asym > 0.1


def test_nonconvergence_reported_not_raised(torus_rc, test1):
    # max_rk_steps caps attempts; the count reports accepted steps only
    cfg = ProjectionConfig(max_rk_steps=3)
    res = project(torus_rc, test1.dynamics(), cfg, np.array([1.9, 0.0, 0.0]))
    assert not res.converged
    assert 0 < res.rk_steps <= 3
    with pytest.raises(Exception):
        res.require_converged()


def test_engine_and_python_paths_agree(torus_rc, test1, rng):
    cfg = ProjectionConfig()
    dyn = test1.dynamics(A=ABAR)
    for _ in range(50):
        x = torus_embed(*rng.uniform(0.0, TWO_PI, 2)) + rng.normal(scale=0.05, size=3)
        eng = project(torus_rc, dyn, cfg, x)
        py = project(torus_rc, dyn, cfg, x, engine="python")
        assert eng.rk_steps == py.rk_steps
        np.testing.assert_allclose(eng.point, py.point, atol=1e-12)


def test_config_validation():
    with pytest.raises(ValueError):
        ProjectionConfig(kappa=1.0)
    with pytest.raises(ValueError):
        ProjectionConfig(initial_dt=0.0)
    with pytest.raises(ValueError):
        ProjectionConfig(eps_tol=-1.0)
