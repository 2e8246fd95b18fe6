import numpy as np
import pytest

from sdllg.driver import default_trilayer_config, initialize
from sdllg.fem import FemWorkspace
from sdllg.mesh import Region, build_multilayer_mesh

TRILAYER = ((0.4, Region.MAGNETIC), (0.2, Region.CONDUCTOR), (0.4, Region.MAGNETIC))


@pytest.fixture(scope="session")
def trilayer_mesh():
    return build_multilayer_mesh(TRILAYER, (1.0, 1.0), (2, 2, 5))


@pytest.fixture(scope="session")
def trilayer_ws(trilayer_mesh):
    return FemWorkspace(trilayer_mesh)


@pytest.fixture(scope="session")
def unit_cube_mesh():
    return build_multilayer_mesh([(1.0, Region.MAGNETIC)], (1.0, 1.0), 2)


@pytest.fixture(scope="session")
def unit_cube_ws(unit_cube_mesh):
    return FemWorkspace(unit_cube_mesh)


@pytest.fixture(scope="session")
def default_init():
    return initialize(default_trilayer_config())


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
