import numpy as np
import pytest

from models.schemas import SampledFunction
from services.funcs import grid_from_points, make_grid, sample


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def make_data(t, f, label="test") -> SampledFunction:
    return SampledFunction(grid=grid_from_points(t), values=np.asarray(f, dtype=float), label=label)


@pytest.fixture
def samples():
    """Factory: SampledFunction from abscissae and values."""
    return make_data


@pytest.fixture
def coarse_f1():
    return sample("f1", make_grid(-1.0, 1.0, 0.02))


@pytest.fixture
def abs_data():
    t = np.linspace(-1.0, 1.0, 21)
    return make_data(t, np.abs(t), label="abs")
