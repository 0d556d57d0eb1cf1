"""Reaction coordinates, the built-in torus surface, and angle-space quadrature.

A reaction coordinate is a smooth map xi: R^d -> R^k whose zero level set is
the submanifold to sample on.  The sampler only ever needs xi, its Jacobian
and (for verification) the componentwise Hessians; coordinates can supply
those analytically or fall back to central finite differences.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import RankDeficiencyError

TWO_PI = 2.0 * np.pi


def _fd_jacobian(fun, x, out_dim, step=None):
    """Central-difference Jacobian of ``fun`` at x, shape (len(x), out_dim)."""
    x = np.asarray(x, dtype=float)
    h = step if step is not None else 1e-5 * max(1.0, np.linalg.norm(x))
    jac = np.empty((x.size, out_dim))
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        jac[i] = (np.asarray(fun(xp)) - np.asarray(fun(xm))) / (2.0 * h)
    return jac


@dataclass
class ReactionCoordinate:
    """A constraint map xi: R^d -> R^k together with its derivatives.

    ``xi`` returns shape (k,), ``grad`` returns the d x k Jacobian whose
    columns are the gradients of the components, ``hessians`` returns shape
    (k, d, d).  When ``grad_fn``/``hess_fn`` are omitted they are replaced by
    central finite differences with step 1e-5 * max(1, |x|).
    """

    dim_ambient: int
    dim_constraint: int
    xi_fn: callable
    grad_fn: callable = None
    hess_fn: callable = None

    def __post_init__(self):
        if not (1 <= self.dim_constraint <= self.dim_ambient):
            raise ValueError("need 1 <= k <= d")

    @property
    def d(self):
        return self.dim_ambient

    @property
    def k(self):
        return self.dim_constraint

    def xi(self, x):
        return np.atleast_1d(np.asarray(self.xi_fn(np.asarray(x, dtype=float)), dtype=float))

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        if self.grad_fn is not None:
            return np.asarray(self.grad_fn(x), dtype=float).reshape(self.d, self.k)
        return _fd_jacobian(self.xi, x, self.k)

    def hessians(self, x):
        x = np.asarray(x, dtype=float)
        if self.hess_fn is not None:
            return np.asarray(self.hess_fn(x), dtype=float).reshape(self.k, self.d, self.d)
        # second differences of the analytic/FD gradient, symmetrized
        h = 1e-5 * max(1.0, np.linalg.norm(x))
        hess = np.empty((self.k, self.d, self.d))
        for j in range(self.d):
            xp = x.copy()
            xm = x.copy()
            xp[j] += h
            xm[j] -= h
            dg = (self.grad(xp) - self.grad(xm)) / (2.0 * h)  # (d, k)
            hess[:, :, j] = dg.T
        return 0.5 * (hess + np.transpose(hess, (0, 2, 1)))

    def smallest_singular_value(self, x):
        return np.linalg.svd(self.grad(x), compute_uv=False)[-1]

    def check_rank(self, x, tol=1e-10):
        """Raise RankDeficiencyError when the Jacobian is numerically rank deficient."""
        s = self.smallest_singular_value(x)
        if s < tol:
            raise RankDeficiencyError(np.asarray(x, dtype=float), s)
        return s


# ---------------------------------------------------------------------------
# torus surface
# ---------------------------------------------------------------------------

def torus_xi(x, R=1.0, r=0.5):
    """Quartic whose zero level set is the torus with radii (R, r)."""
    x = np.asarray(x, dtype=float)
    s = R * R - r * r + x @ x
    return s * s - 4.0 * R * R * (x[0] ** 2 + x[1] ** 2)


def torus_grad_xi(x, R=1.0, r=0.5):
    x = np.asarray(x, dtype=float)
    s = R * R - r * r + x @ x
    return np.array(
        [
            4.0 * x[0] * (s - 2.0 * R * R),
            4.0 * x[1] * (s - 2.0 * R * R),
            4.0 * x[2] * s,
        ]
    )


def torus_hess_xi(x, R=1.0, r=0.5):
    x = np.asarray(x, dtype=float)
    s = R * R - r * r + x @ x
    h = 8.0 * np.outer(x, x)
    h[0, 0] += 4.0 * (s - 2.0 * R * R)
    h[1, 1] += 4.0 * (s - 2.0 * R * R)
    h[2, 2] += 4.0 * s
    return h


def torus_embed(phi, theta, R=1.0, r=0.5):
    """Embed surface angles (phi poloidal, theta toroidal) into R^3."""
    rho = R + r * np.cos(phi)
    return np.array([rho * np.cos(theta), rho * np.sin(theta), r * np.sin(phi)])


def torus_angles(x, R=1.0, r=0.5):
    """Invert the embedding: (phi, theta) in [0, 2*pi)^2 for a point near the torus."""
    x = np.asarray(x, dtype=float)
    rho = np.hypot(x[..., 0], x[..., 1])
    phi = np.arctan2(x[..., 2], rho - R) % TWO_PI
    theta = np.arctan2(x[..., 1], x[..., 0]) % TWO_PI
    return phi, theta


def torus_grad_norm(phi, R=1.0, r=0.5):
    """|grad xi| on the surface as a function of the poloidal angle."""
    return 8.0 * R * R * r * (1.0 + (r / R) * np.cos(phi))


def surface_density(phi, R=1.0, r=0.5):
    """Normalised surface-measure density of the torus in (phi, theta)."""
    return (1.0 + (r / R) * np.cos(phi)) / (TWO_PI ** 2)


@dataclass
class TorusSurface:
    """Torus with major radius R and minor radius r, 0 < r < R."""

    major_radius: float = 1.0
    minor_radius: float = 0.5
    coordinate: ReactionCoordinate = field(init=False, repr=False)

    def __post_init__(self):
        if not 0.0 < self.minor_radius < self.major_radius:
            raise ValueError("need 0 < r < R")
        R, r = self.major_radius, self.minor_radius
        self.coordinate = ReactionCoordinate(
            dim_ambient=3,
            dim_constraint=1,
            xi_fn=lambda x: torus_xi(x, R, r),
            grad_fn=lambda x: torus_grad_xi(x, R, r),
            hess_fn=lambda x: torus_hess_xi(x, R, r),
        )
        # marks the coordinate as eligible for the compiled fast path
        self.coordinate.torus_params = (R, r)

    def embed(self, phi, theta):
        return torus_embed(phi, theta, self.major_radius, self.minor_radius)

    def angles(self, x):
        return torus_angles(x, self.major_radius, self.minor_radius)

    def random_points(self, n, rng):
        """n points on the surface, uniform in the angle parametrisation."""
        phi = rng.uniform(0.0, TWO_PI, size=n)
        theta = rng.uniform(0.0, TWO_PI, size=n)
        return np.stack([self.embed(p, t) for p, t in zip(phi, theta)])


# ---------------------------------------------------------------------------
# simple analytic coordinates used in tests and verification
# ---------------------------------------------------------------------------

def quadratic_coordinate(quads, lins=None, consts=None):
    """Coordinate with components xi_a(x) = x'Q_a x / 2 + b_a'x + c_a.

    ``quads`` is a sequence of symmetric (d, d) arrays; gradients and Hessians
    are exact.
    """
    quads = [np.asarray(q, dtype=float) for q in quads]
    k = len(quads)
    d = quads[0].shape[0]
    lins = [np.zeros(d)] * k if lins is None else [np.asarray(b, float) for b in lins]
    consts = np.zeros(k) if consts is None else np.asarray(consts, dtype=float)

    def xi(x):
        return np.array([0.5 * x @ q @ x + b @ x + c for q, b, c in zip(quads, lins, consts)])

    def grad(x):
        return np.stack([q @ x + b for q, b in zip(quads, lins)], axis=1)

    def hess(x):
        return np.stack(quads)

    return ReactionCoordinate(d, k, xi, grad, hess)


def circle_coordinate():
    """xi(x) = (x1^2 + x2^2 - 1) / 2 on R^2."""
    return quadratic_coordinate([np.eye(2)], consts=[-0.5])


def sphere_coordinate():
    """xi(x) = (|x|^2 - 1) / 2 on R^3."""
    return quadratic_coordinate([np.eye(3)], consts=[-0.5])


def double_quadric_coordinate():
    """(d, k) = (4, 2): the Clifford-torus pair of quadrics in R^4."""
    q2 = np.diag([1.0, 1.0, -1.0, -1.0])
    return quadratic_coordinate([np.eye(4), q2], consts=[-1.0, 0.0])


# ---------------------------------------------------------------------------
# quadrature ground truth on the torus
# ---------------------------------------------------------------------------

def quadrature_expectation(f, U, beta, grid_size=512):
    """Expectation of f under exp(-beta*U) dphi dtheta / Z on [0, 2*pi)^2.

    Uniform periodic grid; the trapezoid rule on such a grid is spectrally
    accurate for smooth periodic integrands.  ``f`` and ``U`` take (phi,
    theta) arrays.  Raises ValueError on non-finite integrand values.
    """
    if grid_size < 16:
        raise ValueError("grid_size must be at least 16")
    g = np.linspace(0.0, TWO_PI, grid_size, endpoint=False)
    phi, theta = np.meshgrid(g, g, indexing="ij")
    u = np.asarray(U(phi, theta), dtype=float)
    fv = np.asarray(f(phi, theta), dtype=float)
    u = np.broadcast_to(u, phi.shape)
    fv = np.broadcast_to(fv, phi.shape)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(fv))):
        raise ValueError("non-finite integrand values on the quadrature grid")
    w = np.exp(-beta * (u - u.min()))
    return float((fv * w).sum() / w.sum())
