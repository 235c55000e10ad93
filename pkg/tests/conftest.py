import numpy as np
import pytest

from celldiv.direct import constant_b_series, constant_rate, solve_pair
from celldiv.grid import make_grid


@pytest.fixture(scope="session")
def grid12():
    return make_grid(12.0, 4096)


@pytest.fixture(scope="session")
def unit_rate(grid12):
    return constant_rate(grid12, 1.0)


@pytest.fixture(scope="session")
def unit_pair(unit_rate):
    """Converged eigen-elements for B = 1 on the reference grid, with adjoint."""
    return solve_pair(unit_rate, tol=1e-11)


@pytest.fixture(scope="session")
def unit_series(grid12):
    return constant_b_series(1.0, grid12)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
