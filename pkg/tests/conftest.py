import pytest

from mpflex.services.avg import run_avg
from mpflex.services.fixtures import degenerate_market, five_bus
from mpflex.services.mplp import assemble_mplp


@pytest.fixture(scope="session")
def five_bus_instance():
    return five_bus()


@pytest.fixture(scope="session")
def five_bus_mplp(five_bus_instance):
    return assemble_mplp(five_bus_instance)


@pytest.fixture(scope="session")
def five_bus_pwa(five_bus_mplp):
    return run_avg(five_bus_mplp, epsilon=1e-4)


@pytest.fixture(scope="session")
def degenerate_instance():
    return degenerate_market()
