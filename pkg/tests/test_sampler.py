import numpy as np
import pytest

from levelset_sampler import (
    ABAR,
    DynamicsSpec,
    NoiseKind,
    ProjectionConfig,
    ProjectionError,
    SchemeConfig,
    circle_coordinate,
    half_step,
    run,
    run_many,
    soft_step,
    step,
    stream_key,
)
from levelset_sampler.noise import noise_vector
from conftest import free_spec

TWO_PI = 2.0 * np.pi


def quadratic_well_spec(A=None):
    return DynamicsSpec(
        dim=3,
        potential=lambda x: 0.5 * x @ x,
        grad_potential=lambda x: np.asarray(x, dtype=float),
        beta=1.0,
        antisym=A,
    )


def test_half_step_zero_drift_zero_noise(test1):
    x = np.array([1.5, 0.0, 0.0])  # grad U1 vanishes at x3 = 0
    out = half_step(test1.dynamics(A=ABAR), x, 0.01, np.zeros(3))
    np.testing.assert_array_equal(out, x)


def test_half_step_hand_values():
    x = np.array([1.0, 0.0, 0.0])
    out = half_step(quadratic_well_spec(), x, 0.01, np.zeros(3))
    np.testing.assert_allclose(out, [0.99, 0.0, 0.0], atol=1e-15)
    out = half_step(quadratic_well_spec(A=ABAR), x, 0.01, np.zeros(3))
    np.testing.assert_allclose(out, [0.99, -0.02, 0.0], atol=1e-15)


def test_half_step_noise_scaling():
    spec = quadratic_well_spec()
    eta = np.array([1.0, -1.0, 2.0])
    h = 0.04
    out = half_step(spec, np.zeros(3), h, eta)
    np.testing.assert_allclose(out, np.sqrt(2.0 * h / spec.beta) * eta, atol=1e-15)


def test_step_identity_at_drift_free_point(torus_rc, test1):
    x = np.array([1.5, 0.0, 0.0])
    new, res = step(torus_rc, test1.dynamics(), ProjectionConfig(), x, 0.01, np.zeros(3))
    np.testing.assert_array_equal(new, x)
    assert res.rk_steps == 0


def test_step_escalates_projection_failure(torus_rc, test1):
    cfg = ProjectionConfig(max_rk_steps=2)
    eta = np.array([3.0, 0.0, 0.0])
    with pytest.raises(ProjectionError) as err:
        step(torus_rc, test1.dynamics(), cfg, np.array([1.5, 0.0, 0.0]), 0.5, eta, step_index=7)
    assert err.value.step_index == 7
    assert err.value.state is not None


def test_run_constant_observable_exact(torus_rc, test1):
    def const(x):
        return 2.5

    const.engine_code = (0, 2.5)
    cfg = SchemeConfig(step_size=0.01, total_time=0.5, seed=4)
    for engine in ("auto", None):
        out = run(torus_rc, test1.dynamics(), ProjectionConfig(), cfg, test1.initial_state(),
                  const, engine=engine)
        assert out.running_mean == 2.5
        assert out.n_steps == 50


def test_run_is_deterministic(torus_rc, test1):
    cfg = SchemeConfig(step_size=5e-3, total_time=5.0, seed=123)
    a = run(torus_rc, test1.dynamics(), ProjectionConfig(), cfg, test1.initial_state(),
            test1.observable)
    b = run(torus_rc, test1.dynamics(), ProjectionConfig(), cfg, test1.initial_state(),
            test1.observable)
    assert a.running_mean == b.running_mean
    assert a.asym_var_estimate == b.asym_var_estimate
    assert a.transition_count == b.transition_count
    assert a.mean_intermediate_xi == b.mean_intermediate_xi
    assert a.rk_histogram == b.rk_histogram
    np.testing.assert_array_equal(a.final_state, b.final_state)


def test_engine_matches_python_path(torus_rc, test2):
    cfg = SchemeConfig(step_size=1e-2, total_time=2.0, seed=9,
                       record_trajectory=True, record_intermediate_xi=True,
                       histogram_bins=8)
    dyn = test2.dynamics(A=ABAR)
    eng = run(torus_rc, dyn, ProjectionConfig(), cfg, test2.initial_state(), test2.observable)
    py = run(torus_rc, dyn, ProjectionConfig(), cfg, test2.initial_state(), test2.observable,
             engine=None)
    assert eng.n_steps == py.n_steps == 200
    assert eng.running_mean == pytest.approx(py.running_mean, rel=1e-10)
    assert eng.mean_intermediate_xi == pytest.approx(py.mean_intermediate_xi, rel=1e-10)
    assert eng.transition_count == py.transition_count
    assert eng.rk_histogram == py.rk_histogram
    np.testing.assert_allclose(eng.final_state, py.final_state, atol=1e-9)
    np.testing.assert_allclose(eng.angles, py.angles, atol=1e-9)
    np.testing.assert_array_equal(eng.histogram, py.histogram)
    np.testing.assert_allclose(eng.xi_half_series, py.xi_half_series, atol=1e-9)


def test_states_stay_on_surface(torus_rc, test1):
    cfg = SchemeConfig(step_size=1e-2, total_time=20.0, seed=3)
    pcfg = ProjectionConfig()
    out = run(torus_rc, test1.dynamics(), pcfg, cfg, test1.initial_state(), test1.observable)
    assert out.max_state_xi < pcfg.eps_tol


def test_histogram_counts_cover_all_steps(torus_rc, test1):
    cfg = SchemeConfig(step_size=1e-2, total_time=5.0, seed=3, histogram_bins=16)
    out = run(torus_rc, test1.dynamics(), ProjectionConfig(), cfg, test1.initial_state(),
              test1.observable)
    assert out.histogram.sum() == out.n_steps
    assert sum(out.rk_histogram.values()) == out.n_steps


def test_n_steps_rounding():
    assert SchemeConfig(step_size=0.3, total_time=1.0).n_steps == 3
    assert SchemeConfig(step_size=0.25, total_time=1.0).n_steps == 4
    with pytest.raises(ValueError):
        SchemeConfig(step_size=0.5, total_time=0.2)
    with pytest.raises(ValueError):
        SchemeConfig(step_size=0.0, total_time=1.0)


def test_run_many_streams_independent_and_ordered(torus_rc, test1):
    cfg = SchemeConfig(step_size=1e-2, total_time=2.0, seed=5)
    seq = run_many(torus_rc, test1.dynamics(), ProjectionConfig(), cfg, test1.initial_state(),
                   test1.observable, n_runs=4, threads=1)
    par = run_many(torus_rc, test1.dynamics(), ProjectionConfig(), cfg, test1.initial_state(),
                   test1.observable, n_runs=4, threads=2)
    means_seq = [s.running_mean for s in seq]
    means_par = [s.running_mean for s in par]
    assert means_seq == means_par
    assert len(set(means_seq)) == 4


def test_bounded_noise_chains_run(torus_rc, test1):
    for kind in (NoiseKind.RADEMACHER, NoiseKind.UNIFORM_BOUNDED):
        cfg = SchemeConfig(step_size=1e-2, total_time=1.0, seed=8, noise=kind)
        out = run(torus_rc, test1.dynamics(), ProjectionConfig(), cfg, test1.initial_state(),
                  test1.observable)
        assert np.isfinite(out.running_mean)


def test_soft_step_hand_value():
    # circle, U = 0: x - (h/eps) * xi * grad xi = (2,0) - 0.1 * 1.5 * (2,0)
    circle = circle_coordinate()
    out = soft_step(circle, free_spec(2), 0.1, np.array([2.0, 0.0]), 0.01, np.zeros(2))
    np.testing.assert_allclose(out, [1.7, 0.0], atol=1e-14)


def test_soft_step_large_epsilon_recovers_half_step():
    spec = quadratic_well_spec(A=ABAR)
    x = np.array([1.0, 0.2, -0.3])
    from levelset_sampler import TorusSurface

    rc = TorusSurface().coordinate
    soft = soft_step(rc, spec, 1e12, x, 0.01, np.zeros(3))
    hard = half_step(spec, x, 0.01, np.zeros(3))
    np.testing.assert_allclose(soft, hard, atol=1e-9)


def test_soft_step_stiffness_blowup():
    # explicit Euler on the penalty term is unstable once h >> epsilon
    circle = circle_coordinate()
    spec = free_spec(2)
    escaped = 0
    for seed in range(5):
        key = stream_key(seed)
        x = np.array([1.0, 0.0])
        for ell in range(1000):
            eta = noise_vector(NoiseKind.GAUSSIAN, key, ell, 2)
            x = soft_step(circle, spec, 1e-4, x, 1e-2, eta)
            if not np.all(np.isfinite(x)) or np.linalg.norm(x) > 1e3:
                escaped += 1
                break
    assert escaped > 0


def test_soft_step_epsilon_validation():
    with pytest.raises(ValueError):
        soft_step(circle_coordinate(), free_spec(2), 0.0, np.array([1.0, 0.0]), 0.01, np.zeros(2))
