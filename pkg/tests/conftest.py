import numpy as np
import pytest

from iganet.analytic import ExcitationDipole
from iganet.efie import assemble_system
from iganet.geometry import make_unit_sphere, refine_surface
from iganet.quadrature import QuadratureSettings
from iganet.spaces import build_space

KAPPA = 2.0
DIPOLE_POSITION = (0.2, 0.2, 0.2)
DIPOLE_MOMENT = (0.0, 0.1, 0.1)


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow acceptance tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def sphere():
    return make_unit_sphere()


@pytest.fixture(scope="session")
def excitation():
    return ExcitationDipole(np.array(DIPOLE_POSITION), np.array(DIPOLE_MOMENT), KAPPA)


@pytest.fixture(scope="session")
def space12(sphere):
    return build_space(sphere, 1)


@pytest.fixture(scope="session")
def space48(sphere):
    return build_space(refine_surface(sphere, 1), 1)


@pytest.fixture(scope="session")
def system48(space48, excitation):
    return assemble_system(space48, excitation, QuadratureSettings(), threads=2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
