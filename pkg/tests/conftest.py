import numpy as np
import pytest

from signray import AttackGoal, Example, HardLabelOracle, LinearModel, SearchConfig


@pytest.fixture
def axis_model():
    """Two classes split by the x1=0 hyperplane; class 1 wins for x1 < 0."""
    return LinearModel(np.array([[1.0, 0.0], [-1.0, 0.0]]), np.zeros(2))


@pytest.fixture
def axis_example():
    return Example(np.array([-2.0, 0.0]), 1)


@pytest.fixture
def axis_oracle(axis_model):
    return HardLabelOracle(axis_model)


@pytest.fixture
def untargeted():
    return AttackGoal.untargeted()


@pytest.fixture
def search_cfg():
    return SearchConfig(rel_tol=1e-3, initial_lambda=0.5)
