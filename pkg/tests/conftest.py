import numpy as np
import pytest

from misanthrope.equilibrium import build_family
from misanthrope.model import catalog


@pytest.fixture(scope="session")
def tasep():
    return catalog("tasep")


@pytest.fixture(scope="session")
def tasep_family(tasep):
    return build_family(tasep)


@pytest.fixture(scope="session")
def k2():
    return catalog("k-exclusion", K=2)


@pytest.fixture(scope="session")
def k2_family(k2):
    return build_family(k2)


@pytest.fixture(scope="session")
def k3():
    return catalog("k-exclusion", K=3)


@pytest.fixture(scope="session")
def k3_family(k3):
    return build_family(k3)


@pytest.fixture(scope="session")
def zero_range():
    return catalog("zero-range")


@pytest.fixture(scope="session")
def zr_family(zero_range):
    return build_family(zero_range, theta_range=(-3.5, 1.5))


@pytest.fixture(scope="session")
def bricklayers():
    return catalog("bricklayers")


@pytest.fixture(scope="session")
def bl_family(bricklayers):
    return build_family(bricklayers, theta_range=(-1.5, 1.5))


@pytest.fixture()
def rng():
    return np.random.default_rng(0xC0FFEE)
