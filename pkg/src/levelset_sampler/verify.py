"""Numerical certification of the analytical identities behind the scheme.

Each check compares two independently computed sides of an identity (finite
differences of the projection map against kernel matrices, quadrature of
matrix-exponential integrals against closed forms) and reports the worst
absolute error, the tolerance, and the witness point.
"""

from dataclasses import dataclass

import numpy as np

from .kernels import compute_kernel, nullspace_basis
from .projection import project


@dataclass
class CheckReport:
    name: str
    max_abs_error: float
    tolerance: float
    passed: bool
    witness: np.ndarray = None

    @classmethod
    def from_error(cls, name, error, tolerance, witness=None):
        error = float(error)
        return cls(name, error, tolerance, error <= tolerance, witness)


def merge_reports(name, reports):
    """Worst-case aggregation of per-point reports into one row."""
    worst = max(reports, key=lambda r: r.max_abs_error)
    return CheckReport(
        name=name,
        max_abs_error=worst.max_abs_error,
        tolerance=worst.tolerance,
        passed=all(r.passed for r in reports),
        witness=worst.witness,
    )


# ---------------------------------------------------------------------------
# matrix exponential (scaling and squaring, truncated Taylor series)
# ---------------------------------------------------------------------------

def expm(M, tol=1e-12):
    """exp(M) for small dense matrices; exact identity at M = 0."""
    M = np.asarray(M, dtype=float)
    norm = np.linalg.norm(M, 1)
    squarings = max(0, int(np.ceil(np.log2(norm / 0.5))) if norm > 0.5 else 0)
    A = M / (2.0 ** squarings)
    out = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    k = 1
    while True:
        term = term @ A / k
        out = out + term
        if np.linalg.norm(term, 1) < tol * max(1.0, np.linalg.norm(out, 1)) or k > 60:
            break
        k += 1
    for _ in range(squarings):
        out = out @ out
    return out


# ---------------------------------------------------------------------------
# derivative checks of the projection map
# ---------------------------------------------------------------------------

def _proj_point(rc, spec, cfg, x):
    res = project(rc, spec, cfg, x)
    res.require_converged()
    return res.point


def check_grad_theta(rc, spec, proj_cfg, x, fd_step=1e-4, kernel_spec=None):
    """Jacobian of the projection at a surface point equals the oblique projector P.

    Central differences with the stopping and step-control tolerances
    tightened far below the 1e-4 comparison tolerance: integration error of
    the flow jumps when the accepted-step pattern changes between displaced
    starting points, and finite differences amplify such jumps by 1/fd_step.
    ``kernel_spec`` substitutes a different dynamics on the projector side;
    it exists for negative-control self-tests and defaults to ``spec``.
    """
    x = np.asarray(x, dtype=float)
    cfg = proj_cfg.tightened(1e-10, error_tol=min(proj_cfg.error_tol, 1e-10))
    d = rc.d
    jac = np.empty((d, d))
    for j in range(d):
        xp = x.copy()
        xm = x.copy()
        xp[j] += fd_step
        xm[j] -= fd_step
        jac[:, j] = (_proj_point(rc, spec, cfg, xp) - _proj_point(rc, spec, cfg, xm)) / (
            2.0 * fd_step
        )
    P = compute_kernel(rc, kernel_spec if kernel_spec is not None else spec, x).P
    err = np.max(np.abs(jac - P))
    return CheckReport.from_error("grad_theta", err, 1e-4, x)


def check_hess_theta(rc, spec, proj_cfg, x, fd_step=1e-3):
    """Diffusion-contracted Hessian of the projection matches the kernel divergence.

    Left side: sum_jr a_jr d2 Theta_i / dx_j dx_r by second-order central
    differences of the projection.  Right side: sum_j dB_ij/dx_j - sum_jl
    P_il da_lj/dx_j, with B and a differentiated by finite differences.
    Tolerance is 1e-2 relative to the larger side.  Second differences
    amplify endpoint noise by 1/fd_step^2, so the flow is integrated with a
    strongly tightened step-control tolerance.
    """
    x = np.asarray(x, dtype=float)
    cfg = proj_cfg.tightened(1e-10, error_tol=min(proj_cfg.error_tol, 1e-11))
    d = rc.d
    a = spec.a(x)
    center = _proj_point(rc, spec, cfg, x)

    axis_p = []
    axis_m = []
    for j in range(d):
        xp = x.copy()
        xm = x.copy()
        xp[j] += fd_step
        xm[j] -= fd_step
        axis_p.append(_proj_point(rc, spec, cfg, xp))
        axis_m.append(_proj_point(rc, spec, cfg, xm))

    lhs = np.zeros(d)
    for j in range(d):
        second = (axis_p[j] - 2.0 * center + axis_m[j]) / fd_step ** 2
        lhs += a[j, j] * second
    for j in range(d):
        for rr in range(j + 1, d):
            xpp = x.copy(); xpp[j] += fd_step; xpp[rr] += fd_step
            xpm = x.copy(); xpm[j] += fd_step; xpm[rr] -= fd_step
            xmp = x.copy(); xmp[j] -= fd_step; xmp[rr] += fd_step
            xmm = x.copy(); xmm[j] -= fd_step; xmm[rr] -= fd_step
            mixed = (
                _proj_point(rc, spec, cfg, xpp)
                - _proj_point(rc, spec, cfg, xpm)
                - _proj_point(rc, spec, cfg, xmp)
                + _proj_point(rc, spec, cfg, xmm)
            ) / (4.0 * fd_step ** 2)
            lhs += 2.0 * a[j, rr] * mixed

    # right side: divergence of B minus P times divergence of a
    fd_b = 1e-5
    div_B = np.zeros(d)
    for j in range(d):
        xp = x.copy()
        xm = x.copy()
        xp[j] += fd_b
        xm[j] -= fd_b
        div_B += (compute_kernel(rc, spec, xp).B[:, j] - compute_kernel(rc, spec, xm).B[:, j]) / (
            2.0 * fd_b
        )
    kern = compute_kernel(rc, spec, x)
    rhs = div_B - kern.P @ spec.div_diffusion(x)

    scale = max(np.max(np.abs(lhs)), np.max(np.abs(rhs)), 1e-30)
    err = np.max(np.abs(lhs - rhs)) / scale
    return CheckReport.from_error("hess_theta", err, 1e-2, x)


# ---------------------------------------------------------------------------
# kernel identity bundle
# ---------------------------------------------------------------------------

def check_kernel_identities(rc, spec, x, tol=1e-9):
    """P^2 = P, PV = V, grad' P = 0, P a P' = B_sym, the V/Pi resolution of the
    identity, and positivity of the real parts of the spectrum of Phi."""
    x = np.asarray(x, dtype=float)
    kern = compute_kernel(rc, spec, x)
    grad = rc.grad(x)
    a = spec.a(x)
    amA = a - spec.antisym
    V = nullspace_basis(rc, x)
    Pi = V.T @ np.linalg.solve(amA, V)
    errs = [
        np.max(np.abs(kern.P @ kern.P - kern.P)),
        np.max(np.abs(kern.P @ V - V)),
        np.max(np.abs(grad.T @ kern.P)),
        np.max(np.abs(kern.P @ a @ kern.P.T - kern.B_sym)),
        np.max(
            np.abs(
                V @ np.linalg.solve(Pi, V.T) @ np.linalg.inv(amA)
                + amA @ grad @ np.linalg.solve(kern.Phi, grad.T)
                - np.eye(rc.d)
            )
        ),
        max(0.0, -np.min(np.linalg.eigvals(kern.Phi).real)),
    ]
    return CheckReport.from_error("kernel_identities", max(errs), tol, x)


# ---------------------------------------------------------------------------
# matrix-exponential integral identities
# ---------------------------------------------------------------------------

def _expm_grid(M, t_max, nodes):
    """e^{-s M} on the uniform grid s_i = i * t_max / nodes, i = 0..nodes."""
    d = M.shape[0]
    E_step = expm(-(t_max / nodes) * M)
    out = np.empty((nodes + 1, d, d))
    out[0] = np.eye(d)
    for i in range(1, nodes + 1):
        out[i] = out[i - 1] @ E_step
    return out


def _trapz(values, t_max):
    nodes = values.shape[0] - 1
    w = np.full(nodes + 1, t_max / nodes)
    w[0] *= 0.5
    w[-1] *= 0.5
    return np.tensordot(w, values, axes=(0, 0))


def _trapz_richardson(values, t_max, levels=3):
    """Trapezoid sums Richardson-extrapolated ``levels`` times (Romberg row).

    Plain trapezoid would need ~3e4 nodes per matrix exponential integral for
    the target accuracy; three extrapolation levels reach it from ~2e3 nodes.
    """
    nodes = values.shape[0] - 1
    while nodes % (2 ** levels) != 0 and levels > 0:
        levels -= 1
    row = [_trapz(values[:: 2 ** (levels - j)], t_max) for j in range(levels + 1)]
    for k in range(1, levels + 1):
        factor = 4.0 ** k
        row = [
            (factor * row[j + 1] - row[j]) / (factor - 1.0)
            for j in range(len(row) - 1)
        ]
    return row[0]


def choose_t_max(Gamma, P, target=1e-9, t0=1.0, max_doublings=24):
    """Smallest doubling of t0 with ||e^{-t Gamma} - P||_max below target.

    Uses the known limit of the flow gradient, so the truncation bound is
    self-validating rather than resting on eigenvalue estimates.
    """
    t = t0
    for _ in range(max_doublings):
        if np.max(np.abs(expm(-t * Gamma) - P)) < target:
            return t
        t *= 2.0
    raise ValueError("e^{-t Gamma} does not approach its limit; check the spectrum of Phi")


def check_appendix_identity(rc, spec, x, t_max=None, quad_nodes=4096, tol=1e-6):
    """grad' * integral_0^inf e^{-s Gamma} a e^{-s Gamma'} ds = Phi^{-1} grad' (a - A) / 2.

    The integral is evaluated by trapezoid quadrature with one Richardson
    refinement on a truncated interval; the truncation point is chosen from
    the known limit of e^{-t Gamma}.
    """
    x = np.asarray(x, dtype=float)
    kern = compute_kernel(rc, spec, x)
    eigs = np.linalg.eigvals(kern.Phi)
    if np.min(eigs.real) <= 0.0:
        raise ValueError("all eigenvalues of Phi must have positive real part")
    a = spec.a(x)
    grad = rc.grad(x)
    amA = a - spec.antisym
    if t_max is None:
        t_max = choose_t_max(kern.Gamma, kern.P)
    E = _expm_grid(kern.Gamma, t_max, quad_nodes)
    integrand = np.einsum("nij,jk,nlk->nil", E, a, E)
    M = _trapz_richardson(integrand, t_max)
    lhs = grad.T @ M
    rhs = 0.5 * np.linalg.solve(kern.Phi, grad.T @ amA)
    err = np.max(np.abs(lhs - rhs))
    return CheckReport.from_error("appendix_integral", err, tol, x)


def check_exp_identities(rc, spec, x, t=None, quad_nodes=1024, tol=1e-6):
    """Finite-t integral identities for e^{-s Phi}:

    int_0^t e^{-s Phi} ds = (I - e^{-t Phi}) Phi^{-1}
    int_0^t e^{-s Phi} (Phi Phi^{-T} + I) e^{-s Phi'} ds = (I - e^{-t Phi} e^{-t Phi'}) Phi^{-T}
    """
    x = np.asarray(x, dtype=float)
    Phi = compute_kernel(rc, spec, x).Phi
    k = Phi.shape[0]
    if t is None:
        t = 2.0 / max(np.min(np.linalg.eigvals(Phi).real), 1e-12)
    E = _expm_grid(Phi, t, quad_nodes)
    lhs1 = _trapz_richardson(E, t)
    rhs1 = (np.eye(k) - expm(-t * Phi)) @ np.linalg.inv(Phi)
    middle = Phi @ np.linalg.inv(Phi.T) + np.eye(k)
    integrand = np.einsum("nij,jk,nlk->nil", E, middle, E)
    lhs2 = _trapz_richardson(integrand, t)
    rhs2 = (np.eye(k) - expm(-t * Phi) @ expm(-t * Phi.T)) @ np.linalg.inv(Phi.T)
    err = max(np.max(np.abs(lhs1 - rhs1)), np.max(np.abs(lhs2 - rhs2)))
    return CheckReport.from_error("exp_identities", err, tol, x)
