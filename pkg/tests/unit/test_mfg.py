# tests/unit/test_mfg.py

import dataclasses
import math

import numpy as np
import pytest

from src.errors import GridError, InstabilityError, ParameterError, ShapeError
from src.models.fields import PowerPolicy, initial_density
from src.models.params import Grid, SolverOptions
from src.models.results import InterferenceTrace
from src.solvers.mfg import (
    coarsen_density,
    cost_curvature,
    cost_gradient,
    costate_gradient,
    depleted_fraction,
    evaluate_policy,
    first_order_residual,
    fpk_forward,
    fpk_step,
    full_power_policy,
    hjb_backward,
    hjb_step,
    initial_policy,
    mf_sinr,
    optimal_power_update,
    refine_transport,
    running_cost,
    sinr_gain,
    solve_equilibrium,
    stationarity_gap,
)


class TestCost:
    def test_sinr_hand_value(self, ref_params):
        assert mf_sinr(ref_params, 0.025, 0.7069 - ref_params.sigma0) == pytest.approx(56.58, abs=0.02)
        assert mf_sinr(ref_params, 0.0, 0.7069) == 0.0

    def test_sinr_is_linear_in_power(self, ref_params):
        assert mf_sinr(ref_params, 0.02, 0.5) == pytest.approx(2 * mf_sinr(ref_params, 0.01, 0.5), rel=1e-14)

    def test_running_cost_limits(self, ref_params):
        assert running_cost(ref_params, 0.0, 0.7, 0.4) == 0.0
        assert running_cost(ref_params, 0.02, 0.7, 0.0) == pytest.approx(0.02)
        gamma = mf_sinr(ref_params, 0.02, 0.7)
        assert running_cost(ref_params, 0.02, 0.7, 1.0) == pytest.approx(-math.log2(1 + gamma))

    def test_gradient_matches_finite_differences(self, ref_params):
        h = 1e-6
        for power in (0.002, 0.01, 0.024):
            fd = (running_cost(ref_params, power + h, 0.7069, 0.5) - running_cost(ref_params, power - h, 0.7069, 0.5)) / (2 * h)
            assert cost_gradient(ref_params, power, 0.7069, 0.5) == pytest.approx(fd, rel=1e-6)

    def test_curvature_matches_finite_differences(self, ref_params):
        h = 1e-6
        power = 0.01
        fd = (cost_gradient(ref_params, power + h, 0.7069, 0.5) - cost_gradient(ref_params, power - h, 0.7069, 0.5)) / (2 * h)
        assert cost_curvature(ref_params, power, 0.7069, 0.5) == pytest.approx(fd, rel=1e-6)
        assert cost_curvature(ref_params, power, 0.7069, 0.5) > 0


class TestPowerUpdate:
    def test_pure_cost_switches_off(self, ref_params):
        assert optimal_power_update(ref_params, 0.0, 0.0, 0.7) == 0.0

    def test_flat_slope_goes_full_power(self, ref_params):
        assert optimal_power_update(ref_params, 0.0, 1.0, 0.7) == ref_params.p_max

    def test_hand_value(self, ref_params):
        i_mf = 0.8 - ref_params.sigma0
        assert sinr_gain(ref_params, i_mf) == pytest.approx(2000.0)
        assert optimal_power_update(ref_params, -5.0, 0.1, i_mf) == pytest.approx(0.02395, abs=1e-5)

    def test_minimizes_lagrangian(self, ref_params):
        grid = np.linspace(0.0, ref_params.p_max, 200_001)
        for dmu in (-1000.0, -80.0, -5.0, 0.0, 0.3):
            objective = running_cost(ref_params, grid, 0.7069, 0.6) - grid * dmu
            best = grid[np.argmin(objective)]
            assert optimal_power_update(ref_params, dmu, 0.6, 0.7069) == pytest.approx(best, abs=2e-7)

    def test_vectorized(self, ref_params):
        out = optimal_power_update(ref_params, np.array([[0.0, -5.0]]), 0.1, np.array([[0.8], ]))
        assert out.shape == (1, 2)
        assert np.all((out >= 0) & (out <= ref_params.p_max))


def _shifted_grid(ref_params) -> Grid:
    # P_max·δt = δE, so full power moves mass exactly one cell per step
    return Grid.from_params(ref_params, n_time=75, n_energy=30)


class TestTransport:
    def test_zero_policy_is_identity(self, grid, uniform_m0):
        np.testing.assert_array_equal(fpk_step(uniform_m0, np.zeros(grid.n_energy + 1), grid), uniform_m0)

    def test_step_preserves_mass(self, ref_params, grid):
        m0 = initial_density(grid, "triangular")
        P = initial_policy(ref_params, grid, 1.0)[0]
        out = fpk_step(m0, P, grid)
        assert out.sum() * grid.de == pytest.approx(1.0, abs=1e-12)
        assert np.all(out >= 0)

    def test_cfl_violation(self, ref_params):
        g = Grid.from_params(ref_params, n_time=100, n_energy=60)
        P = initial_policy(ref_params, g, 1.0)[0]
        with pytest.raises(GridError) as exc:
            fpk_step(initial_density(g), P, g)
        assert exc.value.cfl == pytest.approx(1.5)

    def test_depleted_cell_must_not_transmit(self, ref_params, grid, uniform_m0):
        with pytest.raises(ParameterError):
            fpk_step(uniform_m0, np.full(grid.n_energy + 1, ref_params.p_max), grid)

    def test_negative_density_is_reported(self, grid):
        m = np.zeros(grid.n_energy + 1)
        m[3] = -1.0
        with pytest.raises(InstabilityError):
            fpk_step(m, np.zeros(grid.n_energy + 1), grid)

    def test_shape_mismatch(self, grid):
        with pytest.raises(ShapeError):
            fpk_step(np.zeros(4), np.zeros(5), grid)

    def test_unit_courant_is_exact_shift(self, ref_params):
        g = _shifted_grid(ref_params)
        m0 = initial_density(g, "increasing")
        m = fpk_forward(m0, full_power_policy(ref_params, g), g)
        for k in (1, 10, 29):
            np.testing.assert_allclose(m.values[k, 1 : g.n_energy + 1 - k], m0[1 + k :], rtol=1e-10)
            np.testing.assert_allclose(m.values[k, g.n_energy + 1 - k :], 0.0, atol=1e-6)
        assert depleted_fraction(m, g) == pytest.approx(1.0)

    def test_forward_keeps_every_slice_normalized(self, ref_params, grid):
        m0 = initial_density(grid, "decreasing")
        m = fpk_forward(m0, initial_policy(ref_params, grid, 0.7), grid)
        assert m.max_mass_error(grid) < 1e-9
        assert np.all(m.values >= 0)
        np.testing.assert_array_equal(m.initial, m0)

    def test_zero_policy_freezes_population(self, grid, uniform_m0):
        m = fpk_forward(uniform_m0, np.zeros(grid.shape), grid)
        np.testing.assert_array_equal(m.values, np.tile(uniform_m0, (grid.n_time + 1, 1)))

    def test_upwind_error_shrinks_with_refinement(self, ref_params):
        def l1_error(n_time, n_energy):
            g = Grid.from_params(ref_params, n_time=n_time, n_energy=n_energy)
            m0 = initial_density(g, "triangular")
            m = fpk_forward(m0, initial_policy(ref_params, g, 0.1), g)
            e = g.energies[1:] + 0.1 * ref_params.p_max * g.t_frame
            half = g.e_max / 2
            exact = np.where(e <= g.e_max, (half - np.abs(e - half)) / half**2, 0.0)
            return float(np.sum(np.abs(m.values[-1, 1:] - exact)) * g.de)

        coarse = l1_error(100, 30)
        fine = l1_error(400, 120)
        assert fine < coarse
        assert fine < 0.05


class TestCostate:
    def test_zero_source_stays_zero(self, ref_params, grid):
        mu = hjb_step(ref_params, np.zeros(grid.n_energy + 1), np.zeros(grid.n_energy + 1), 0.5, 0.0, grid)
        np.testing.assert_array_equal(mu, 0.0)

    def test_zero_policy_has_no_advection(self, ref_params, grid):
        mu = np.linspace(-3.0, 0.0, grid.n_energy + 1)
        np.testing.assert_array_equal(hjb_step(ref_params, mu, np.zeros(grid.n_energy + 1), 0.5, 0.1, grid), mu)

    def test_constant_source_integrates_over_frame(self, ref_params, grid):
        P = np.full(grid.shape, ref_params.p_max)
        mu = hjb_backward(ref_params, P, 0.0, InterferenceTrace.silent(grid.n_time + 1), grid)
        np.testing.assert_allclose(mu.values[0], ref_params.p_max * grid.t_frame, rtol=1e-12)
        np.testing.assert_array_equal(mu.values[-1], 0.0)

    def test_silent_policy_without_reward(self, ref_params, grid):
        mu = hjb_backward(ref_params, np.zeros(grid.shape), 0.0, InterferenceTrace.silent(grid.n_time + 1), grid)
        np.testing.assert_array_equal(mu.values, 0.0)

    def test_trace_must_match_grid(self, ref_params, grid):
        with pytest.raises(ShapeError):
            hjb_backward(ref_params, np.zeros(grid.shape), 0.5, InterferenceTrace.silent(3), grid)


class TestEquilibrium:
    @pytest.fixture
    def solved(self, ref_params, small_grid):
        return solve_equilibrium(ref_params, small_grid, initial_density(small_grid))

    def test_converges(self, solved):
        assert solved.converged
        assert solved.final_residual < solved.tol
        assert solved.iterations == len(solved.history)

    def test_policy_invariants(self, ref_params, small_grid, solved):
        P = solved.policy.values
        assert P.shape == small_grid.shape
        assert np.all((P >= 0) & (P <= ref_params.p_max))
        np.testing.assert_array_equal(P[:, 0], 0.0)
        np.testing.assert_array_equal(solved.costate.values[-1], 0.0)

    def test_mean_field_normalized(self, small_grid, solved):
        assert solved.mass_error < 1e-9
        assert solved.mean_field.max_mass_error(small_grid) < 1e-9

    def test_stationarity(self, ref_params, small_grid, solved):
        gap = stationarity_gap(solved, ref_params, small_grid)
        interior = ~np.isnan(gap)
        assert np.any(interior)
        i_mf = np.broadcast_to(solved.interference.i_mf[:, None], small_grid.shape)
        curvature = cost_curvature(ref_params, solved.policy.values, i_mf, solved.p_s)
        # tol is in watts; the gap in watts is gap / curvature
        assert np.all(np.abs(gap[interior]) <= 10 * solved.tol * curvature[interior])
        assert first_order_residual(solved, ref_params, small_grid) == pytest.approx(np.max(np.abs(gap[interior])))

    def test_stationarity_skips_cells_damped_next_to_full_power(self, ref_params, small_grid, solved):
        i_mf = solved.interference.i_mf[:, None]
        update = optimal_power_update(ref_params, costate_gradient(solved.costate, small_grid), solved.p_s, i_mf)
        pinned = update >= ref_params.p_max
        pinned[:, 0] = False
        assert np.any(pinned)

        nudged = np.where(pinned, ref_params.p_max - 6e-9, solved.policy.values)
        shifted = dataclasses.replace(solved, policy=PowerPolicy(nudged))
        gap = stationarity_gap(shifted, ref_params, small_grid)
        assert np.all(np.isnan(gap[pinned]))
        assert first_order_residual(shifted, ref_params, small_grid) == pytest.approx(
            first_order_residual(solved, ref_params, small_grid)
        )

    def test_probabilities(self, solved):
        assert 0 < solved.p_s <= 1
        assert 0 <= solved.pi_a <= 1
        assert solved.fixed_point_converged

    def test_deterministic(self, ref_params, small_grid, solved):
        again = solve_equilibrium(ref_params, small_grid, initial_density(small_grid))
        np.testing.assert_array_equal(again.policy.values, solved.policy.values)
        np.testing.assert_array_equal(again.mean_field.values, solved.mean_field.values)
        assert again.p_s == solved.p_s

    def test_sparse_population_transmits_at_full_power(self, ref_params, small_grid):
        result = solve_equilibrium(ref_params.with_updates(lambda_u=1.0), small_grid, initial_density(small_grid))
        P = result.policy.values
        X = small_grid.n_time
        slack = result.final_residual
        for n in range(X + 1):
            for i in range(1, small_grid.n_energy + 1):
                if i > X - n:
                    assert P[n, i] >= ref_params.p_max - slack

    def test_non_convergence_is_flagged(self, ref_params, small_grid):
        result = solve_equilibrium(ref_params, small_grid, initial_density(small_grid), SolverOptions(max_iters=1, tol=1e-30))
        assert not result.converged
        assert result.iterations == 1

    def test_rejects_unstable_grid(self, ref_params):
        g = Grid.from_params(ref_params, n_time=10, n_energy=30)
        with pytest.raises(GridError):
            solve_equilibrium(ref_params, g, initial_density(g))

    def test_rejects_unnormalized_m0(self, ref_params, small_grid):
        with pytest.raises(ParameterError):
            solve_equilibrium(ref_params, small_grid, np.ones(small_grid.n_energy + 1))


class TestBaseline:
    def test_full_power_depletes_everyone(self, ref_params, grid, uniform_m0):
        result = evaluate_policy(ref_params, grid, uniform_m0, full_power_policy(ref_params, grid))
        # a full budget lasts 4 ms at P_max, well under the 10 ms frame
        assert depleted_fraction(result.mean_field, grid) == pytest.approx(1.0, abs=1e-3)
        assert result.iterations == 0

    def test_rejects_out_of_bounds_policy(self, ref_params, grid, uniform_m0):
        with pytest.raises(ParameterError):
            evaluate_policy(ref_params, grid, uniform_m0, np.full(grid.shape, 2 * ref_params.p_max))


class TestRefinement:
    def test_spreads_mass_and_keeps_depleted_cells_silent(self, ref_params, small_grid):
        m0 = initial_density(small_grid, "triangular")
        policy = initial_policy(ref_params, small_grid, 0.7)
        fine, fine_policy, fine_m0 = refine_transport(small_grid, 4, policy, m0)
        assert fine.shape == (4 * small_grid.n_time + 1, 4 * small_grid.n_energy + 1)
        assert fine.dt / fine.de == pytest.approx(small_grid.dt / small_grid.de)
        np.testing.assert_array_equal(fine_policy[:, 0], 0.0)
        assert fine_m0.sum() * fine.de == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(coarsen_density(fine_m0, fine, small_grid), m0 * small_grid.de, atol=1e-14)

    def test_fine_steps_read_their_coarse_step(self, ref_params, small_grid):
        policy = initial_policy(ref_params, small_grid, 0.5)
        policy[3, 1:] = ref_params.p_max
        fine, fine_policy, _ = refine_transport(small_grid, 2, policy, initial_density(small_grid))
        np.testing.assert_array_equal(fine_policy[6:8, -1], ref_params.p_max)
        np.testing.assert_array_equal(fine_policy[8, -1], 0.5 * ref_params.p_max)

    def test_identity_factor(self, ref_params, small_grid):
        m0 = initial_density(small_grid)
        policy = initial_policy(ref_params, small_grid, 0.3)
        fine, fine_policy, fine_m0 = refine_transport(small_grid, 1, policy, m0)
        assert fine == small_grid
        np.testing.assert_array_equal(fine_policy, policy)
        np.testing.assert_allclose(fine_m0, m0)

    def test_rejects_zero_factor(self, ref_params, small_grid):
        with pytest.raises(ParameterError):
            refine_transport(small_grid, 0, initial_policy(ref_params, small_grid, 0.3), initial_density(small_grid))
