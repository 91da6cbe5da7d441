import numpy as np
import pytest

from app.services.lie_core import heisenberg, lie_group_space, so3
from app.services.metric_core import InnerProduct

from .testing_utils import FIXTURES


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def heisenberg_space():
    return lie_group_space(heisenberg())


@pytest.fixture
def so3_space():
    return lie_group_space(so3())


@pytest.fixture
def identity3():
    return InnerProduct.identity(3)
