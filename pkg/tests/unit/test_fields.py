# tests/unit/test_fields.py

import numpy as np
import pytest

from src.errors import ParameterError, ShapeError
from src.models.fields import (
    Costate,
    MeanField,
    PowerPolicy,
    check_density_slice,
    density_from_weights,
    initial_density,
)


@pytest.mark.parametrize("shape", ["uniform", "increasing", "decreasing", "triangular"])
def test_initial_density_has_unit_mass(grid, shape):
    m0 = initial_density(grid, shape)
    assert m0.sum() * grid.de == pytest.approx(1.0, abs=1e-12)
    assert np.all(m0 >= 0)


def test_increasing_density_is_empty_at_zero(grid):
    m0 = initial_density(grid, "increasing")
    assert m0[0] == 0.0
    assert np.all(np.diff(m0) > 0)


def test_unknown_shape(grid):
    with pytest.raises(ParameterError):
        initial_density(grid, "bimodal")


def test_weights_are_normalized(grid):
    w = np.zeros(grid.n_energy + 1)
    w[-1] = 3.0
    m0 = density_from_weights(w, grid)
    assert m0[-1] * grid.de == pytest.approx(1.0)


def test_weights_must_match_grid(grid):
    with pytest.raises(ShapeError):
        density_from_weights([1.0, 2.0], grid)
    with pytest.raises(ParameterError):
        density_from_weights(np.zeros(grid.n_energy + 1), grid)


def test_check_density_slice_rejects_bad_mass(grid):
    with pytest.raises(ParameterError, match="unit mass"):
        check_density_slice(np.ones(grid.n_energy + 1), grid)
    with pytest.raises(ShapeError):
        check_density_slice(np.ones(3), grid)


def test_fields_are_read_only(grid):
    m = MeanField(np.ones(grid.shape))
    with pytest.raises(ValueError):
        m.values[0, 0] = 2.0


def test_field_must_be_2d():
    with pytest.raises(ShapeError):
        PowerPolicy(np.zeros(5))


def test_check_grid(grid, small_grid):
    PowerPolicy(np.zeros(grid.shape)).check_grid(grid)
    with pytest.raises(ShapeError):
        PowerPolicy(np.zeros(grid.shape)).check_grid(small_grid)


def test_policy_bounds(ref_params, grid):
    P = np.full(grid.shape, ref_params.p_max)
    with pytest.raises(ParameterError, match="must not transmit"):
        PowerPolicy(P).check_bounds(ref_params.p_max)
    P[:, 0] = 0.0
    PowerPolicy(P).check_bounds(ref_params.p_max)
    with pytest.raises(ParameterError):
        PowerPolicy(P * 2).check_bounds(ref_params.p_max)


def test_mean_field_masses(grid, uniform_m0):
    m = MeanField(np.tile(uniform_m0, (grid.n_time + 1, 1)))
    np.testing.assert_allclose(m.masses(grid), 1.0)
    assert m.max_mass_error(grid) < 1e-12
    np.testing.assert_array_equal(m.initial, uniform_m0)


def test_costate_gradient_is_backward_difference(grid):
    mu = Costate(np.tile(grid.energies, (grid.n_time + 1, 1)))
    grad = mu.energy_gradient(grid)
    assert np.all(grad[:, 0] == 0)
    np.testing.assert_allclose(grad[:, 1:], 1.0)
