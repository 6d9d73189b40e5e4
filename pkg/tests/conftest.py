import pytest

from supou_tsvar.reversion import discretize
from supou_tsvar.supou import STATIONS


@pytest.fixture(scope="session")
def kaz():
    return STATIONS["kazarashi"].reversion


@pytest.fixture(scope="session")
def kaz_d4096(kaz):
    return discretize(kaz, 4096)


@pytest.fixture(scope="session")
def kaz_d15(kaz):
    return discretize(kaz, 2 ** 15)
