import math

import numpy as np
import pytest

from brwlab import laws, ratefn


@pytest.fixture(scope="session")
def off_p2():
    """Deterministic binary branching (rho = 2, extinction impossible)."""
    return laws.make_offspring(((2, 1.0),))


@pytest.fixture(scope="session")
def off_sub():
    """p0=0.3, p2=0.7: supercritical with extinction probability 3/7."""
    return laws.make_offspring(((0, 0.3), (2, 0.7)))


@pytest.fixture(scope="session")
def g1(off_p2):
    inc = laws.gaussian(1)
    return inc, off_p2, ratefn.solve_constants(inc, off_p2)


@pytest.fixture(scope="session")
def g2(off_p2):
    inc = laws.gaussian(2)
    return inc, off_p2, ratefn.solve_constants(inc, off_p2)


@pytest.fixture(scope="session")
def g3(off_p2):
    inc = laws.gaussian(3)
    return inc, off_p2, ratefn.solve_constants(inc, off_p2)


@pytest.fixture(scope="session")
def c_star():
    """Closed-form speed/tilt for sigma=1 Gaussian, rho=2."""
    return math.sqrt(2.0 * math.log(2.0))


@pytest.fixture
def rng():
    return np.random.default_rng(20260823)
