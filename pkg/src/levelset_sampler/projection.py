"""Projection onto the constraint surface via the damped constraint flow.

The projection of a point x is the long-time limit of the ODE

    dy/ds = -((2 - kappa)/2) |xi|^(1-kappa) sum_a (xi_a/|xi|) (a - A) grad xi_a,

whose limit is independent of kappa in [0, 1); kappa only rescales the speed
along the orbit (kappa = 0 is the plain gradient-type flow of |xi|^2/2 in the
(a - A) geometry, kappa > 0 reaches the surface in finite time).  The ODE is
integrated with the Bogacki-Shampine 3(2) embedded pair: steps are accepted
against the second-order error estimate, and on top of the standard step
control the next step is halved whenever |xi| increased over an accepted
step.  Integration stops once |xi| falls below the constraint tolerance.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import _engine
from .errors import ProjectionError, RankDeficiencyError


@dataclass(frozen=True)
class ProjectionConfig:
    """Knobs of the projection flow integration.

    ``eps_tol`` is the stopping criterion on |xi|; ``error_tol`` is the
    embedded-pair step-control tolerance; ``max_rk_steps`` caps step attempts
    (accepted plus rejected).
    """

    kappa: float = 0.5
    initial_dt: float = 0.003
    eps_tol: float = 1e-7
    max_rk_steps: int = 10_000
    halving: bool = True
    error_tol: float = 1e-6

    def __post_init__(self):
        if not 0.0 <= self.kappa < 1.0:
            raise ValueError("kappa must lie in [0, 1)")
        if self.initial_dt <= 0.0 or self.eps_tol <= 0.0:
            raise ValueError("initial_dt and eps_tol must be positive")
        if self.error_tol <= 0.0:
            raise ValueError("error_tol must be positive")

    def tightened(self, eps_tol, error_tol=None):
        if error_tol is None:
            return replace(self, eps_tol=eps_tol)
        return replace(self, eps_tol=eps_tol, error_tol=error_tol)


@dataclass(frozen=True)
class ProjectionResult:
    point: np.ndarray
    rk_steps: int
    final_xi_norm: float
    converged: bool
    initial_xi_norm: float = 0.0

    def require_converged(self, step_index=None):
        if not self.converged:
            raise ProjectionError(
                f"projection did not reach tolerance after {self.rk_steps} steps "
                f"(|xi| = {self.final_xi_norm:.3e})",
                state=self.point,
                step_index=step_index,
            )
        return self


def flow_rhs(rc, spec, kappa, x):
    """Right-hand side of the projection flow; zero exactly on the surface."""
    x = np.asarray(x, dtype=float)
    xi = rc.xi(x)
    norm = float(np.linalg.norm(xi))
    if norm == 0.0:
        return np.zeros(rc.d)
    unit = xi / norm
    amA = spec.a(x) - spec.antisym
    direction = amA @ rc.grad(x) @ unit
    return -0.5 * (2.0 - kappa) * norm ** (1.0 - kappa) * direction


def _engine_projectable(rc, spec):
    params = getattr(rc, "torus_params", None)
    if params is None or not spec.a_is_constant:
        return None
    if not np.array_equal(spec.a(np.zeros(3)), np.eye(3)):
        return None
    return params


def project(rc, spec, cfg, x, engine="auto"):
    """Project x onto the zero level set of rc under the (a - A) flow.

    Non-convergence within ``cfg.max_rk_steps`` is reported through the
    ``converged`` flag, not an exception; rank loss along the path raises
    RankDeficiencyError.  ``engine="auto"`` uses the compiled torus kernel
    when the setup allows it, ``engine="python"`` forces the generic path.
    """
    x = np.asarray(x, dtype=float)
    params = _engine_projectable(rc, spec) if engine == "auto" else None
    if params is not None:
        R, r = params
        x0 = abs(float(rc.xi(x)[0]))
        pt, steps, cur, status = _engine.project_point(
            x,
            spec.antisym,
            R,
            r,
            cfg.kappa,
            cfg.initial_dt,
            cfg.eps_tol,
            cfg.max_rk_steps,
            cfg.halving,
            cfg.error_tol,
        )
        if status == _engine.STATUS_RANK_LOSS:
            raise RankDeficiencyError(pt, 0.0)
        return ProjectionResult(
            point=pt,
            rk_steps=int(steps),
            final_xi_norm=float(cur),
            converged=status == _engine.STATUS_OK,
            initial_xi_norm=x0,
        )
    return _project_python(rc, spec, cfg, x)


def _project_python(rc, spec, cfg, x):
    # mirrors the compiled kernel step for step: embedded 3(2) control with
    # FSAL, rejecting attempts whose |xi| progress falls below 1% of the
    # stopping tolerance (retried at half the step, which also caps the step
    # size for the rest of the call; see the compiled kernel for why the
    # progress floor is needed)
    initial = float(np.linalg.norm(rc.xi(x)))
    prev = initial
    if prev < cfg.eps_tol:
        return ProjectionResult(x.copy(), 0, prev, True, initial)
    progress_floor = 0.01 * cfg.eps_tol
    dt = cfg.initial_dt
    dt_cap = np.inf
    steps = 0
    attempts = 0
    k1 = flow_rhs(rc, spec, cfg.kappa, x)
    while attempts < cfg.max_rk_steps:
        attempts += 1
        k2 = flow_rhs(rc, spec, cfg.kappa, x + 0.5 * dt * k1)
        k3 = flow_rhs(rc, spec, cfg.kappa, x + 0.75 * dt * k2)
        candidate = x + dt * (2.0 / 9.0 * k1 + 1.0 / 3.0 * k2 + 4.0 / 9.0 * k3)
        k4 = flow_rhs(rc, spec, cfg.kappa, candidate)
        err_vec = dt * (
            (2.0 / 9.0 - 7.0 / 24.0) * k1
            + (1.0 / 3.0 - 0.25) * k2
            + (4.0 / 9.0 - 1.0 / 3.0) * k3
            - 0.125 * k4
        )
        err = float(np.linalg.norm(err_vec))
        if err > cfg.error_tol:
            dt *= max(0.2, 0.9 * (cfg.error_tol / err) ** (1.0 / 3.0))
            continue
        cur = float(np.linalg.norm(rc.xi(candidate)))
        if cfg.halving and cur > prev - progress_floor:
            dt *= 0.5
            dt_cap = dt
            continue
        x = candidate
        steps += 1
        k1 = k4
        if cur < cfg.eps_tol:
            return ProjectionResult(x, steps, cur, True, initial)
        if err == 0.0:
            fac = 5.0
        else:
            fac = min(5.0, max(0.2, 0.9 * (cfg.error_tol / err) ** (1.0 / 3.0)))
        dt = min(dt * fac, dt_cap)
        prev = cur
        rc.check_rank(x)
    return ProjectionResult(x, steps, prev, False, initial)
