"""Built-in torus sampling setups.

Two standard test problems on the torus (R = 1, r = 0.5), both with identity
diffusion:

* test1: beta = 20, U = 10 x3^2, f = 30 (x3/r)^2.  Both depend only on the
  poloidal angle; the target expectation is 0.303.
* test2: beta = 10, U = cos^2(theta), f = theta (theta - 3pi/2)(theta - 2pi)/6
  with theta the azimuthal angle.  The potential is bimodal with wells at
  theta = pi/2 and 3pi/2; the target expectation is 1.923.

The non-reversible variants use the rotation generator ABAR in the x1-x2
plane.  Potentials and observables carry ``engine_code`` attributes so chains
over these setups run on the compiled fast path.
"""

from dataclasses import dataclass

import numpy as np

from .geometry import TorusSurface, quadrature_expectation
from .kernels import DynamicsSpec

ABAR = np.array([[0.0, 2.0, 0.0], [-2.0, 0.0, 0.0], [0.0, 0.0, 0.0]])

A_CHOICES = {"zero": np.zeros((3, 3)), "abar": ABAR}


def _with_engine_code(fn, code):
    fn.engine_code = code
    return fn


@dataclass(frozen=True)
class TorusBenchmark:
    name: str
    beta: float
    R: float
    r: float
    potential: callable           # ambient-space U(x)
    grad_potential: callable
    observable: callable          # ambient-space f(x)
    potential_angles: callable    # U(phi, theta) for quadrature
    observable_angles: callable   # f(phi, theta) for quadrature

    def surface(self):
        return TorusSurface(self.R, self.r)

    def dynamics(self, A=None, beta=None):
        """Identity-diffusion dynamics for this benchmark with the given A."""
        return DynamicsSpec(
            dim=3,
            potential=self.potential,
            grad_potential=self.grad_potential,
            beta=self.beta if beta is None else beta,
            antisym=np.zeros((3, 3)) if A is None else A,
        )

    def initial_state(self):
        return self.surface().embed(0.0, 0.0)

    def true_expectation(self, grid_size=512):
        return quadrature_expectation(
            self.observable_angles, self.potential_angles, self.beta, grid_size
        )


def _make_test1(R=1.0, r=0.5, beta=20.0, u_coeff=10.0, f_coeff=30.0):
    def U(x):
        return u_coeff * x[2] ** 2

    def grad_U(x):
        return np.array([0.0, 0.0, 2.0 * u_coeff * x[2]])

    def f(x):
        return f_coeff * (x[2] / r) ** 2

    return TorusBenchmark(
        name="test1",
        beta=beta,
        R=R,
        r=r,
        potential=_with_engine_code(U, (1, u_coeff)),
        grad_potential=grad_U,
        observable=_with_engine_code(f, (1, f_coeff)),
        potential_angles=lambda phi, theta: u_coeff * (r * np.sin(phi)) ** 2,
        observable_angles=lambda phi, theta: f_coeff * np.sin(phi) ** 2,
    )


def _theta_of(x):
    return np.arctan2(x[1], x[0]) % (2.0 * np.pi)


def _f2_of_theta(theta):
    return theta * (theta - 1.5 * np.pi) * (theta - 2.0 * np.pi) / 6.0


def _make_test2(R=1.0, r=0.5, beta=10.0):
    def U(x):
        # cos^2(theta) = x1^2 / (x1^2 + x2^2)
        return x[0] ** 2 / (x[0] ** 2 + x[1] ** 2)

    def grad_U(x):
        rho2 = x[0] ** 2 + x[1] ** 2
        return np.array(
            [2.0 * x[0] * x[1] ** 2 / rho2 ** 2, -2.0 * x[0] ** 2 * x[1] / rho2 ** 2, 0.0]
        )

    def f(x):
        return _f2_of_theta(_theta_of(x))

    return TorusBenchmark(
        name="test2",
        beta=beta,
        R=R,
        r=r,
        potential=_with_engine_code(U, (2, 1.0)),
        grad_potential=grad_U,
        observable=_with_engine_code(f, (2, 1.0 / 6.0)),
        potential_angles=lambda phi, theta: np.cos(theta) ** 2,
        observable_angles=lambda phi, theta: _f2_of_theta(theta),
    )


def _make_cosphi(R=1.0, r=0.5, beta=1.0):
    """Flat potential with f = cos(phi); the expectation vanishes by symmetry."""

    def U(x):
        return 0.0

    def grad_U(x):
        return np.zeros(3)

    def f(x):
        rho = np.hypot(x[0], x[1])
        return (rho - R) / r

    return TorusBenchmark(
        name="cosphi",
        beta=beta,
        R=R,
        r=r,
        potential=_with_engine_code(U, (0, 0.0)),
        grad_potential=grad_U,
        observable=f,
        potential_angles=lambda phi, theta: np.zeros_like(phi),
        observable_angles=lambda phi, theta: np.cos(phi),
    )


_FACTORIES = {"test1": _make_test1, "test2": _make_test2, "cosphi": _make_cosphi}


def get_benchmark(name, **overrides):
    """Benchmark by name (test1 | test2 | cosphi), optionally reparametrised."""
    try:
        factory = _FACTORIES[name]
    except KeyError:
        raise KeyError(f"unknown benchmark {name!r}; choose from {sorted(_FACTORIES)}") from None
    return factory(**overrides)
