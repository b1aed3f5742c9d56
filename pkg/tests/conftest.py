import numpy as np
import pytest

from conflab.manifold import Manifold


@pytest.fixture(scope="session")
def torus2():
    return Manifold.torus(2)


@pytest.fixture(scope="session")
def torus3():
    return Manifold.torus(3)


@pytest.fixture(scope="session")
def sphere2():
    return Manifold.sphere(2)


@pytest.fixture(scope="session")
def sphere3():
    return Manifold.sphere(3)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
