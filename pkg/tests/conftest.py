import numpy as np
import pytest

from busoff import CostSpec, LinearSystem


@pytest.fixture
def scalar_sys():
    """Unstable scalar plant A=2, B=1, no noise."""
    return LinearSystem(A=[[2.0]], B=[[1.0]])


@pytest.fixture
def scalar_cost():
    return CostSpec(Q=[[1.0]], R=[[1.0]])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
