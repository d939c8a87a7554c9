import numpy as np
import pytest
from hypothesis import settings

from levylab.measures import Atoms, RadialPower
from levylab.normalizers import Const, Normalizer, PowLogLog

settings.register_profile("ci", max_examples=40, deadline=None)
settings.load_profile("ci")


@pytest.fixture
def two_atoms():
    return Atoms(np.array([[0.8, 0.0], [0.0, 0.3]]), np.array([1.0, 1.0]))


@pytest.fixture
def one_atom():
    return Atoms(np.array([[0.5, 0.0]]), np.array([2.0]))


@pytest.fixture
def radial1():
    return RadialPower(1, 1.0, 0.5)


@pytest.fixture
def sqrt_norm():
    # h(x) = sqrt(log log x) cancels the iterated log, so b(t) = sqrt(t) below t0
    return Normalizer(PowLogLog(0.5))


@pytest.fixture
def const_norm():
    return Normalizer(Const(1.0))


@pytest.fixture
def loglog_norm():
    return Normalizer(PowLogLog(1.0))
