"""The two-step constrained sampling scheme and its soft-constraint comparator.

One step of the scheme, starting from a state x on the surface:

    x_half = x + [(A - a) grad U + (1/beta) div a] h + sqrt(2 h / beta) sigma eta
    x_next = project(x_half)

The running average of an observable over the visited states converges to its
expectation under the conditional measure on the surface as h -> 0 and the
total time grows.  Chains over the built-in torus setups dispatch to the
compiled engine; everything else runs the identical algorithm in numpy.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _engine
from .noise import NOISE_CODE, CounterRNG, NoiseKind, noise_vector, stream_key
from .projection import ProjectionConfig, project, _engine_projectable
from .stats import RunSummary, batch_layout
from .geometry import torus_angles


@dataclass(frozen=True)
class SchemeConfig:
    """Chain length and bookkeeping options for one run."""

    step_size: float
    total_time: float
    noise: NoiseKind = NoiseKind.GAUSSIAN
    seed: int = 0
    record_trajectory: bool = False
    record_intermediate_xi: bool = False
    histogram_bins: int = 0

    def __post_init__(self):
        if self.step_size <= 0.0:
            raise ValueError("step_size must be positive")
        if self.total_time < self.step_size:
            raise ValueError("total_time must be at least one step")

    @property
    def n_steps(self):
        return max(1, int(round(self.total_time / self.step_size)))


def sample_noise(kind, rng, dim):
    """Draw one noise vector of i.i.d. components from a CounterRNG."""
    return rng.draw(kind, dim)


def drift(spec, x):
    """Scheme drift (A - a) grad U + (1/beta) div a at x."""
    x = np.asarray(x, dtype=float)
    b = (spec.antisym - spec.a(x)) @ spec.grad_U(x)
    return b + spec.div_diffusion(x) / spec.beta


def half_step(spec, x, h, eta):
    """Unconstrained half step from x with noise vector eta."""
    x = np.asarray(x, dtype=float)
    return x + h * drift(spec, x) + np.sqrt(2.0 * h / spec.beta) * (spec.sigma(x) @ eta)


def step(rc, spec, proj_cfg, x, h, eta, step_index=None):
    """One full scheme step; raises ProjectionError if the projection fails."""
    x_half = half_step(spec, x, h, eta)
    result = project(rc, spec, proj_cfg, x_half)
    result.require_converged(step_index)
    return result.point, result


def soft_step(rc, spec, epsilon, x, h, eta):
    """Euler-Maruyama step of the penalized (soft-constraint) dynamics.

    The constraint enters as the extra potential |xi|^2 / (2 epsilon); small
    epsilon keeps states near the surface but makes the SDE stiff, which is
    the trade-off the projection scheme avoids.
    """
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    x = np.asarray(x, dtype=float)
    grad_F = rc.grad(x) @ rc.xi(x)
    b = (spec.antisym - spec.a(x)) @ (spec.grad_U(x) + grad_F / epsilon)
    b = b + spec.div_diffusion(x) / spec.beta
    return x + h * b + np.sqrt(2.0 * h / spec.beta) * (spec.sigma(x) @ eta)


def _engine_codes(spec, f):
    """Engine dispatch codes for (U, f), or None when not representable."""
    u = getattr(spec.potential, "engine_code", None)
    fc = getattr(f, "engine_code", None)
    if u is None or fc is None:
        return None
    if spec.dim != 3 or spec.dim_noise != 3:
        return None
    return u, fc


def run(rc, spec, proj_cfg, scheme_cfg, x0, f, stream=0, engine="auto"):
    """Run one chain and summarise it.

    The summary's running mean is (1/n) sum_{l=0}^{n-1} f(x^(l)), i.e. it
    includes the initial state and excludes the state after the last step.
    ``stream`` selects the noise stream of the seed, so independent runs of
    a multi-run experiment are reproducible regardless of scheduling.
    """
    x0 = np.asarray(x0, dtype=float)
    n = scheme_cfg.n_steps
    key = stream_key(scheme_cfg.seed, stream)
    codes = _engine_codes(spec, f) if engine == "auto" else None
    params = _engine_projectable(rc, spec)
    t0 = time.perf_counter()
    if codes is not None and params is not None:
        out = _run_engine(rc, spec, proj_cfg, scheme_cfg, x0, codes, params, key)
    else:
        out = _run_python(rc, spec, proj_cfg, scheme_cfg, x0, f, key)
    out.wall_time = time.perf_counter() - t0
    out.seed = int(scheme_cfg.seed)
    out.stream = int(stream)
    return out


def _summarise(scheme_cfg, n, sum_f, batch_sums, batch_len, rk_hist_arr, sum_xi_half,
               transitions, max_state_xi, x_final, angles, xi_half_series, hist):
    h = scheme_cfg.step_size
    m = batch_sums.shape[0]
    if m >= 2 and batch_len >= 1:
        means = batch_sums / batch_len
        asym_var = h * batch_len * float(np.var(means, ddof=1))
    else:
        asym_var = 0.0
    rk_histogram = {int(k): int(v) for k, v in enumerate(rk_hist_arr) if v > 0}
    return RunSummary(
        n_steps=n,
        running_mean=sum_f / n,
        asym_var_estimate=asym_var,
        transition_count=int(transitions),
        rk_histogram=rk_histogram,
        mean_intermediate_xi=sum_xi_half / n,
        wall_time=0.0,
        max_state_xi=float(max_state_xi),
        final_state=x_final,
        angles=angles,
        xi_half_series=xi_half_series,
        histogram=hist,
    )


def _run_engine(rc, spec, proj_cfg, scheme_cfg, x0, codes, params, key):
    (u_kind, u_param), (f_kind, f_param) = codes
    R, r = params
    n = scheme_cfg.n_steps
    m, batch_len = batch_layout(n)
    batch_sums = np.zeros(m)
    rk_hist = np.zeros(proj_cfg.max_rk_steps + 1, dtype=np.int64)
    bins = scheme_cfg.histogram_bins
    hist = np.zeros((bins, bins), dtype=np.int64)
    angles = np.zeros((n if scheme_cfg.record_trajectory else 0, 2))
    xi_half = np.zeros(n if scheme_cfg.record_intermediate_xi else 0)
    x_final = np.zeros(3)
    status, fail_step, sum_f, sum_xi_half, transitions, total_rk, max_state_xi = _engine.run_chain(
        np.ascontiguousarray(x0),
        R,
        r,
        spec.beta,
        np.ascontiguousarray(spec.antisym),
        u_kind,
        u_param,
        f_kind,
        f_param,
        scheme_cfg.step_size,
        n,
        proj_cfg.kappa,
        proj_cfg.initial_dt,
        proj_cfg.eps_tol,
        proj_cfg.max_rk_steps,
        proj_cfg.halving,
        proj_cfg.error_tol,
        NOISE_CODE[scheme_cfg.noise],
        np.uint64(key),
        rk_hist,
        batch_sums,
        batch_len,
        hist,
        angles,
        xi_half,
        x_final,
    )
    if status != _engine.STATUS_OK:
        from .errors import ProjectionError, RankDeficiencyError

        if status == _engine.STATUS_RANK_LOSS:
            raise RankDeficiencyError(x_final, 0.0)
        raise ProjectionError(
            f"projection failed at step {fail_step}", state=x_final, step_index=int(fail_step)
        )
    return _summarise(
        scheme_cfg, n, sum_f, batch_sums, batch_len, rk_hist, sum_xi_half, transitions,
        max_state_xi, x_final,
        angles if scheme_cfg.record_trajectory else None,
        xi_half if scheme_cfg.record_intermediate_xi else None,
        hist if bins > 0 else None,
    )


def _run_python(rc, spec, proj_cfg, scheme_cfg, x0, f, key):
    n = scheme_cfg.n_steps
    h = scheme_cfg.step_size
    m, batch_len = batch_layout(n)
    batch_sums = np.zeros(m)
    rk_hist = np.zeros(proj_cfg.max_rk_steps + 1, dtype=np.int64)
    bins = scheme_cfg.histogram_bins
    hist = np.zeros((bins, bins), dtype=np.int64) if bins > 0 else None
    is_torus = getattr(rc, "torus_params", None) is not None
    record_angles = scheme_cfg.record_trajectory and is_torus
    angles = np.zeros((n, 2)) if record_angles else None
    xi_half_series = np.zeros(n) if scheme_cfg.record_intermediate_xi else None
    sum_f = 0.0
    sum_xi_half = 0.0
    transitions = 0
    last_region = 0
    max_state_xi = 0.0
    x = x0.copy()
    for ell in range(n):
        fval = float(f(x))
        sum_f += fval
        if batch_len >= 1:
            b = ell // batch_len
            if b < m:
                batch_sums[b] += fval
        if is_torus:
            R, r = rc.torus_params
            phi, theta = torus_angles(x, R, r)
            if record_angles:
                angles[ell, 0] = phi
                angles[ell, 1] = theta
            if hist is not None:
                i = min(int(phi / (2.0 * np.pi) * bins), bins - 1)
                j = min(int(theta / (2.0 * np.pi) * bins), bins - 1)
                hist[i, j] += 1
            region = 0
            if abs(theta - 0.5 * np.pi) <= 0.25 * np.pi:
                region = 1
            elif abs(theta - 1.5 * np.pi) <= 0.25 * np.pi:
                region = 2
            if region != 0:
                if last_region != 0 and region != last_region:
                    transitions += 1
                last_region = region
        eta = noise_vector(scheme_cfg.noise, key, ell, spec.dim_noise)
        x, result = step(rc, spec, proj_cfg, x, h, eta, step_index=ell)
        sum_xi_half += result.initial_xi_norm
        if xi_half_series is not None:
            xi_half_series[ell] = result.initial_xi_norm
        idx = min(result.rk_steps, rk_hist.shape[0] - 1)
        rk_hist[idx] += 1
        max_state_xi = max(max_state_xi, result.final_xi_norm)
    return _summarise(
        scheme_cfg, n, sum_f, batch_sums, batch_len, rk_hist, sum_xi_half, transitions,
        max_state_xi, x, angles, xi_half_series, hist,
    )


def run_many(rc, spec, proj_cfg, scheme_cfg, x0, f, n_runs, threads=1, engine="auto",
             first_stream=0):
    """Independent chains on streams first_stream .. first_stream + n_runs - 1.

    Results come back ordered by stream, independent of thread scheduling.
    """
    streams = range(first_stream, first_stream + n_runs)
    if threads <= 1:
        return [run(rc, spec, proj_cfg, scheme_cfg, x0, f, stream=s, engine=engine) for s in streams]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [
            pool.submit(run, rc, spec, proj_cfg, scheme_cfg, x0, f, stream=s, engine=engine)
            for s in streams
        ]
        return [fut.result() for fut in futures]
