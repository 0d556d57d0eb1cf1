import numpy as np
import pytest

from levelset_sampler import DynamicsSpec, TorusSurface, get_benchmark


@pytest.fixture(scope="session")
def torus():
    return TorusSurface()


@pytest.fixture(scope="session")
def torus_rc(torus):
    return torus.coordinate


@pytest.fixture(scope="session")
def test1():
    return get_benchmark("test1")


@pytest.fixture(scope="session")
def test2():
    return get_benchmark("test2")


@pytest.fixture()
def rng():
    return np.random.default_rng(20240613)


def free_spec(d, A=None, beta=1.0, a=None):
    """Zero-potential dynamics used when only the geometry matters."""
    return DynamicsSpec(
        dim=d,
        potential=lambda x: 0.0,
        grad_potential=lambda x, _d=d: np.zeros(_d),
        beta=beta,
        antisym=A,
        diffusion=a,
    )


def random_antisym(rng, d, scale=2.0):
    M = rng.uniform(-scale, scale, size=(d, d))
    return M - M.T
