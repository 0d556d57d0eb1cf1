"""Point-local constraint matrices for the constrained dynamics.

Given a coordinate xi and a dynamics specification (potential, diffusion pair
a = sigma sigma', constant antisymmetric A, inverse temperature beta), this
module evaluates

    Phi = grad'(a - A) grad          (k x k)
    Gamma = (a - A) grad grad'       (d x d)
    P = I - (a - A) grad Phi^{-1} grad'
    B = P (a - A),   B = B_sym + B_asym

where grad is the d x k Jacobian of xi.  P is an oblique projection onto the
tangent space of the level set; with A = 0 it reduces to the a-orthogonal
projection P0.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import LinearSolveError, RankDeficiencyError

RANK_TOL = 1e-10


def _as_matrix_fn(value, d, rows=None, name="matrix"):
    """Normalize a constant array or callable to a callable of x."""
    rows = d if rows is None else rows
    if callable(value):
        return value, False
    m = np.asarray(value, dtype=float)
    if m.shape[0] != rows:
        raise ValueError(f"{name} has wrong shape {m.shape}")
    return (lambda x, _m=m: _m), True


@dataclass
class DynamicsSpec:
    """Potential, diffusion pair and antisymmetric drift matrix of the dynamics.

    ``diffusion`` (a) and ``diffusion_factor`` (sigma, with a = sigma sigma')
    may be constant arrays or callables of the state; both default to the
    identity.  ``antisym`` must satisfy A' = -A exactly.
    """

    dim: int
    potential: callable
    grad_potential: callable
    beta: float
    antisym: np.ndarray = None
    diffusion: object = None
    diffusion_factor: object = None
    dim_noise: int = None
    div_diffusion: callable = None  # x -> vector with components sum_j da_ij/dx_j

    _a_fn: callable = field(init=False, repr=False)
    _sigma_fn: callable = field(init=False, repr=False)
    a_is_constant: bool = field(init=False, repr=False)

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        d = self.dim
        if self.antisym is None:
            self.antisym = np.zeros((d, d))
        self.antisym = np.asarray(self.antisym, dtype=float)
        if self.antisym.shape != (d, d) or not np.array_equal(self.antisym, -self.antisym.T):
            raise ValueError("antisym must be a d x d matrix with A' = -A exactly")
        if self.diffusion is None:
            self.diffusion = np.eye(d)
        if self.diffusion_factor is None and not callable(self.diffusion):
            a = np.asarray(self.diffusion, dtype=float)
            self.diffusion_factor = scipy.linalg.cholesky(a, lower=True)
        self._a_fn, self.a_is_constant = _as_matrix_fn(self.diffusion, d, name="diffusion")
        self._sigma_fn, _ = _as_matrix_fn(self.diffusion_factor, d, name="diffusion_factor")
        if self.dim_noise is None:
            self.dim_noise = np.asarray(self._sigma_fn(np.zeros(d))).shape[1]
        if self.div_diffusion is None and self.a_is_constant:
            self.div_diffusion = lambda x: np.zeros(d)
        elif self.div_diffusion is None:
            self.div_diffusion = self._fd_div_a

    def a(self, x):
        return np.asarray(self._a_fn(np.asarray(x, dtype=float)), dtype=float)

    def sigma(self, x):
        return np.asarray(self._sigma_fn(np.asarray(x, dtype=float)), dtype=float)

    def grad_U(self, x):
        return np.asarray(self.grad_potential(np.asarray(x, dtype=float)), dtype=float)

    def U(self, x):
        return float(self.potential(np.asarray(x, dtype=float)))

    def _fd_div_a(self, x, step=1e-6):
        x = np.asarray(x, dtype=float)
        div = np.zeros(self.dim)
        for j in range(self.dim):
            xp = x.copy()
            xm = x.copy()
            xp[j] += step
            xm[j] -= step
            div += (self.a(xp)[:, j] - self.a(xm)[:, j]) / (2.0 * step)
        return div

    def with_antisym(self, A):
        """Copy of this spec with a different antisymmetric matrix."""
        return DynamicsSpec(
            dim=self.dim,
            potential=self.potential,
            grad_potential=self.grad_potential,
            beta=self.beta,
            antisym=A,
            diffusion=self.diffusion,
            diffusion_factor=self.diffusion_factor,
            dim_noise=self.dim_noise,
            div_diffusion=None if self.a_is_constant else self.div_diffusion,
        )


@dataclass(frozen=True)
class ConstraintKernel:
    """The six point-local matrices entering the scheme and its analysis."""

    Phi: np.ndarray
    Gamma: np.ndarray
    P: np.ndarray
    B: np.ndarray
    B_sym: np.ndarray
    B_asym: np.ndarray


def _solve_phi(Phi, rhs, x):
    try:
        lu, piv = scipy.linalg.lu_factor(Phi)
        sol = scipy.linalg.lu_solve((lu, piv), rhs)
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise LinearSolveError(f"LU solve against Phi failed at {x}: {exc}") from exc
    if not np.all(np.isfinite(sol)):
        raise LinearSolveError(f"LU solve against Phi produced non-finite values at {x}")
    return sol


def compute_kernel(rc, spec, x):
    """Evaluate the constraint kernel at x.

    Raises RankDeficiencyError when the Jacobian of xi is rank deficient and
    LinearSolveError when the Phi solve fails.
    """
    x = np.asarray(x, dtype=float)
    rc.check_rank(x, RANK_TOL)
    grad = rc.grad(x)
    amA = spec.a(x) - spec.antisym
    Phi = grad.T @ amA @ grad
    Gamma = amA @ grad @ grad.T
    # P = I - (a - A) grad Phi^{-1} grad'
    X = _solve_phi(Phi, grad.T, x)  # (k, d)
    P = np.eye(rc.d) - amA @ grad @ X
    B_raw = P @ amA
    B_sym = 0.5 * (B_raw + B_raw.T)
    B_asym = B_raw - B_sym
    # recompose so that B == B_sym + B_asym holds bitwise
    B = B_sym + B_asym
    for m in (Phi, Gamma, P, B, B_sym, B_asym):
        m.setflags(write=False)
    return ConstraintKernel(Phi=Phi, Gamma=Gamma, P=P, B=B, B_sym=B_sym, B_asym=B_asym)


def compute_reversible_kernel(rc, spec, x):
    """(P0, B0) of the A = 0 dynamics: P0 = I - a grad (grad' a grad)^{-1} grad', B0 = P0 a."""
    x = np.asarray(x, dtype=float)
    rc.check_rank(x, RANK_TOL)
    grad = rc.grad(x)
    a = spec.a(x)
    Phi0 = grad.T @ a @ grad
    X = _solve_phi(Phi0, grad.T, x)
    P0 = np.eye(rc.d) - a @ grad @ X
    return P0, P0 @ a


def compute_J(rc, spec, x, fd_step=1e-5):
    """Divergence-form drift vector of the antisymmetric kernel part.

    J_i = (1/beta) sum_j d(B_asym)_ij/dx_j - (B_asym grad U)_i, with the
    divergence taken by central finite differences of B_asym.  Only used for
    verification; the sampler never needs J.
    """
    x = np.asarray(x, dtype=float)
    d = rc.d
    if np.all(spec.antisym == 0.0):
        # B is symmetric for A = 0, so J vanishes identically
        return np.zeros(d)
    div = np.zeros(d)
    for j in range(d):
        xp = x.copy()
        xm = x.copy()
        xp[j] += fd_step
        xm[j] -= fd_step
        bp = compute_kernel(rc, spec, xp).B_asym
        bm = compute_kernel(rc, spec, xm).B_asym
        div += (bp[:, j] - bm[:, j]) / (2.0 * fd_step)
    B_asym = compute_kernel(rc, spec, x).B_asym
    return div / spec.beta - B_asym @ spec.grad_U(x)


def nullspace_basis(rc, x):
    """Orthonormal basis V (d x (d-k)) of the orthogonal complement of range(grad xi)."""
    x = np.asarray(x, dtype=float)
    rc.check_rank(x, RANK_TOL)
    V = scipy.linalg.null_space(rc.grad(x).T)
    if V.shape != (rc.d, rc.d - rc.k):
        raise RankDeficiencyError(x, 0.0)
    return V
