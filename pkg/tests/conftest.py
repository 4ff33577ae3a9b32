import numpy as np
import pytest

from skyfeel import airspace as air
from skyfeel.bound import LearningConstants
from skyfeel.config import load_config


def make_scene(targets, H=300.0, theta0=70.0, **radio):
    return air.Scene(air.Position(0, 0, 0), [air.Position(*t) for t in targets], H,
                     air.Environment(), air.RadioParams(**radio), theta0)


@pytest.fixture(scope="session")
def default_cfg():
    return load_config()


@pytest.fixture
def small_scene():
    return make_scene([(150, 40, 0), (-200, 90, 0), (60, -230, 0)])


@pytest.fixture
def consts():
    return LearningConstants(0.03, 2.0, 1.0, 0.5, 0.001, 1.0, 0.05)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
