import numpy as np
import pytest

from zpmrrt.dynamics import DragModel
from zpmrrt.geom import ChainModel


@pytest.fixture(scope="session")
def chain():
    return ChainModel.swimmer()


@pytest.fixture(scope="session")
def drag():
    return DragModel()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
