import warnings

import pytest

from adialab import build_fibered_model, build_flat_model
from adialab.errors import HeuristicRationality


@pytest.fixture(scope="session")
def kronecker():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HeuristicRationality)
        return build_flat_model(2, 1, [[1, "sqrt(2)"]], name="kronecker")


@pytest.fixture(scope="session")
def axis():
    return build_flat_model(2, 1, [[1, 0]], name="axis")


@pytest.fixture(scope="session")
def fibered16():
    return build_fibered_model(16, 16, "1 + 0.3*cos(2*pi*x)*cos(2*pi*y)",
                               "1 + 0.5*sin(2*pi*y)^2", name="fibered16")


@pytest.fixture(scope="session")
def flat_grid16():
    return build_fibered_model(16, 16, "1", "1", name="flat16")
