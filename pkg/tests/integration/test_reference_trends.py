# tests/integration/test_reference_trends.py
#
# Reference-deployment trends. Slow; run with `pytest -m trends`.

import numpy as np
import pytest

from src.models.fields import initial_density
from src.models.params import Grid, SolverOptions, SystemParams
from src.oracles.montecarlo import particle_transport
from src.solvers.mfg import coarsen_density, depleted_fraction, fpk_forward, refine_transport, solve_equilibrium
from src.solvers.queueing import queue_metrics

pytestmark = pytest.mark.trends

PER_MINUTE = 0.01 / 60.0


def _solve(**changes):
    p = SystemParams().with_updates(**changes)
    g = Grid.from_params(p)
    result = solve_equilibrium(p, g, initial_density(g), SolverOptions())
    assert result.converged
    return p, g, result


def _non_decreasing(values, slack=1e-6):
    return bool(np.all(np.diff(values) >= -slack))


def _non_increasing(values, slack=1e-6):
    return bool(np.all(np.diff(values) <= slack))


def test_sparse_deployment_depletes_a_minority():
    # upwind smearing overstates depletion on the configured grid; devices
    # moved along dE = −P dt under the same policy bound it from below
    _, g, result = _solve(lambda_s=1.0)
    m0 = initial_density(g)
    upwind = depleted_fraction(result.mean_field, g)
    particles = particle_transport(m0, result.policy, 400_000, g, 13)[-1, 0] * g.de

    fine, fine_policy, fine_m0 = refine_transport(g, 8, result.policy, m0)
    refined = coarsen_density(fpk_forward(fine_m0, fine_policy, fine).values[-1], fine, g)[0]

    assert particles < 0.5 and upwind < 0.5
    assert particles < 0.13 < upwind
    assert refined < upwind


def test_success_grows_with_bs_density():
    p_s = [_solve(lambda_s=lam)[2].p_s for lam in (1.0, 5.0, 10.0, 20.0)]
    assert _non_decreasing(p_s)


def test_delay_falls_with_bs_density():
    delays = []
    for lam in (1.0, 5.0, 10.0, 20.0):
        p, _, result = _solve(lambda_s=lam, p_a=PER_MINUTE)
        delays.append(queue_metrics(p, result.p_s).avg_delay)
    assert _non_increasing(delays)


def test_delay_falls_with_decoding_capability():
    delays = []
    for j in (1, 3, 5, 7):
        p, _, result = _solve(j_mpr=j, p_a=PER_MINUTE)
        delays.append(queue_metrics(p, result.p_s).avg_delay)
    assert _non_increasing(delays)


def test_success_falls_with_device_density():
    p_s = [_solve(lambda_u=lam)[2].p_s for lam in (1000.0, 3000.0, 6000.0)]
    assert _non_increasing(p_s)


def test_success_falls_with_arrival_rate():
    p_s = [_solve(p_a=rate * 0.01 / 3600.0)[2].p_s for rate in (1.0, 6.0, 12.0, 30.0, 60.0)]
    assert _non_increasing(p_s)


def test_delay_grows_with_device_density():
    delays = []
    for lam in (1000.0, 3000.0, 10000.0):
        p, _, result = _solve(lambda_u=lam, p_a=PER_MINUTE)
        delays.append(queue_metrics(p, result.p_s).avg_delay)
    assert _non_decreasing(delays)
