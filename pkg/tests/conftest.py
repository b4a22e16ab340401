# tests/conftest.py

import pytest
import structlog

from src.models.fields import initial_density
from src.models.params import Grid, SystemParams


@pytest.fixture
def ref_params() -> SystemParams:
    return SystemParams()


@pytest.fixture
def oracle_params(ref_params) -> SystemParams:
    """Every device backlogged at 300 devices/km², so λ_a = 9 at π_a = 1"""
    return ref_params.with_updates(lambda_u=300.0)


@pytest.fixture
def grid(ref_params) -> Grid:
    return Grid.from_params(ref_params)


@pytest.fixture
def small_grid(ref_params) -> Grid:
    return Grid.from_params(ref_params, n_time=20, n_energy=6)


@pytest.fixture
def uniform_m0(grid):
    return initial_density(grid)


@pytest.fixture(autouse=True)
def reset_logging():
    """CLI runs bind structlog to a captured stream; restore the defaults afterwards"""
    yield
    structlog.reset_defaults()
