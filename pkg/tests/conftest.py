import numpy as np
import pytest

from kinetic_harris.domain_core import (
    hard_spheres,
    quadratic_potential,
    quartic_potential,
    sublinear_potential,
    subquadratic_potential,
)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240811)


@pytest.fixture(scope="session")
def quadratic():
    return quadratic_potential(1.0)


@pytest.fixture(scope="session")
def quartic():
    return quartic_potential(1.0)


@pytest.fixture(scope="session")
def sublinear():
    return sublinear_potential(1.0, 0.0)


@pytest.fixture(scope="session")
def subquadratic():
    return subquadratic_potential(1.0, 0.5)


@pytest.fixture(scope="session")
def all_potentials(quadratic, quartic, sublinear, subquadratic):
    return [quadratic, quartic, sublinear, subquadratic]


@pytest.fixture(scope="session")
def spheres3():
    return hard_spheres(gamma=1.0, d=3)


@pytest.fixture(scope="session")
def spheres1():
    return hard_spheres(gamma=1.0, d=1)
