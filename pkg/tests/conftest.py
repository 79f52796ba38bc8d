import numpy as np
import pytest

from genlyap import BilinearSystem
from genlyap.benchmarks import heat2d, random_system


def scalar(a=-1.0, nu=None, b=1.0):
    return BilinearSystem([[a]], () if nu is None else ([[nu]],), [[b]], symmetric=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def heat8():
    return heat2d(8)


@pytest.fixture(scope="session")
def sym12():
    return random_system(12, m=2, r=2, seed=7, symmetric=True, contraction=0.6)


@pytest.fixture(scope="session")
def nonsym10():
    return random_system(10, m=1, r=1, seed=3, symmetric=False, contraction=0.5)


def rand_sym(rng, n):
    G = rng.standard_normal((n, n))
    return G + G.T


def rand_psd(rng, n, rank=None):
    G = rng.standard_normal((n, rank or n))
    return G @ G.T
