# src/solvers/mfg.py

from typing import Optional, Tuple, Union

import numpy as np
import structlog

from src.errors import GridError, InstabilityError, ParameterError, ShapeError
from src.models.fields import Costate, MeanField, PowerPolicy, check_density_slice
from src.models.params import CFL_SLACK, Grid, SolverOptions, SystemParams, validate_grid
from src.models.results import EquilibriumResult, FixedPointResult, InterferenceTrace
from src.solvers.queueing import fixed_point_ps_pia

logger = structlog.get_logger()

NEGATIVE_SLACK = 1e-12
LN2 = np.log(2.0)

ArrayLike = Union[float, np.ndarray]


def sinr_gain(p: SystemParams, i_mf: ArrayLike) -> ArrayLike:
    """γ = (2√λ_s)^α/(σ_0 + I_mf), the SINR per watt at the mean serving distance"""
    return (2.0 * np.sqrt(p.lambda_s)) ** p.alpha / (p.sigma0 + np.asarray(i_mf, dtype=float))


def mf_sinr(p: SystemParams, power: ArrayLike, i_mf: ArrayLike) -> ArrayLike:
    value = np.asarray(power, dtype=float) * sinr_gain(p, i_mf)
    return float(value) if np.ndim(value) == 0 else value


def running_cost(p: SystemParams, power: ArrayLike, i_mf: ArrayLike, p_s: float) -> ArrayLike:
    """Energy spent when failing minus rate earned when succeeding"""
    power = np.asarray(power, dtype=float)
    value = (1.0 - p_s) * power - p_s * np.log2(1.0 + mf_sinr(p, power, i_mf))
    return float(value) if np.ndim(value) == 0 else value


def cost_gradient(p: SystemParams, power: ArrayLike, i_mf: ArrayLike, p_s: float) -> ArrayLike:
    """∂F/∂P"""
    gamma = sinr_gain(p, i_mf)
    value = (1.0 - p_s) - p_s * gamma / (LN2 * (1.0 + gamma * np.asarray(power, dtype=float)))
    return float(value) if np.ndim(value) == 0 else value


def cost_curvature(p: SystemParams, power: ArrayLike, i_mf: ArrayLike, p_s: float) -> ArrayLike:
    """∂²F/∂P², nonnegative since F is convex in P"""
    gamma = sinr_gain(p, i_mf)
    return p_s * gamma**2 / (LN2 * (1.0 + gamma * np.asarray(power, dtype=float)) ** 2)


def optimal_power_update(p: SystemParams, dmu_de: ArrayLike, p_s: float, i_mf: ArrayLike) -> ArrayLike:
    """Minimizer of F(P) − P·∂_e μ over [0, P_max].

    When the slope h = (1 − p_s) − ∂_e μ is nonpositive the Lagrangian
    decreases for every admissible power and P_max is optimal.
    """
    gamma = sinr_gain(p, i_mf)
    h = (1.0 - p_s) - np.asarray(dmu_de, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        candidate = p_s / (LN2 * h) - 1.0 / gamma
    out = np.where(h > 0, np.clip(candidate, 0.0, p.p_max), p.p_max)
    return float(out) if out.ndim == 0 else out


def fpk_step(m_slice: np.ndarray, policy_slice: np.ndarray, g: Grid) -> np.ndarray:
    """One explicit upwind step of ∂_t m − ∂_e(P m) = 0.

    Energy only decreases, so mass in cell i is fed from cell i+1. No
    mass enters from above E_max and depleted devices stay at e = 0.
    """
    m_slice = np.asarray(m_slice, dtype=float)
    policy_slice = np.asarray(policy_slice, dtype=float)
    if m_slice.shape != policy_slice.shape or m_slice.shape != (g.n_energy + 1,):
        raise ShapeError(
            f"density {m_slice.shape} and policy {policy_slice.shape} must both be ({g.n_energy + 1},)"
        )
    if policy_slice[0] != 0:
        raise ParameterError("policy", "depleted devices (e = 0) must not transmit")
    courant = g.dt / g.de
    cfl = float(np.max(policy_slice)) * courant
    if cfl > 1.0 + CFL_SLACK:
        raise GridError(f"CFL condition violated: P_max*dt/dE = {cfl:.6g} exceeds 1", cfl=cfl)

    flux = policy_slice * m_slice
    inflow = np.append(flux[1:], 0.0)
    out = m_slice + courant * (inflow - flux)
    # slack scales with the density level, which is O(1/E_max)
    floor = -NEGATIVE_SLACK * max(1.0, float(np.max(m_slice)))
    if np.any(out < floor):
        i = int(np.argmin(out))
        raise InstabilityError(f"negative density {out[i]:.3e} at energy index {i}")
    return np.maximum(out, 0.0)


def fpk_forward(m0: np.ndarray, policy: Union[PowerPolicy, np.ndarray], g: Grid) -> MeanField:
    """Transport the initial energy density across the frame"""
    m0 = check_density_slice(m0, g)
    P = policy.values if isinstance(policy, PowerPolicy) else np.asarray(policy, dtype=float)
    if P.shape != g.shape:
        raise ShapeError(f"policy has shape {P.shape}, grid expects {g.shape}")

    m = np.empty(g.shape)
    m[0] = m0
    for n in range(g.n_time):
        m[n + 1] = fpk_step(m[n], P[n], g)
    return MeanField(m)


def hjb_step(
    p: SystemParams,
    mu_slice: np.ndarray,
    policy_slice: np.ndarray,
    p_s: float,
    i_mf_n: float,
    g: Grid,
) -> np.ndarray:
    """μ^{n−1} from μ^n: upwind advection plus the running-cost source"""
    mu_slice = np.asarray(mu_slice, dtype=float)
    policy_slice = np.asarray(policy_slice, dtype=float)
    if mu_slice.shape != policy_slice.shape:
        raise ShapeError(f"costate {mu_slice.shape} and policy {policy_slice.shape} differ in shape")

    # μ_{−1} := μ_0
    lower = np.concatenate([mu_slice[:1], mu_slice[:-1]])
    source = running_cost(p, policy_slice, i_mf_n, p_s)
    return mu_slice - (g.dt / g.de) * policy_slice * (mu_slice - lower) + source * g.dt


def hjb_backward(
    p: SystemParams,
    policy: Union[PowerPolicy, np.ndarray],
    p_s: float,
    interference: InterferenceTrace,
    g: Grid,
) -> Costate:
    """Sweep the costate back from μ(T_f, ·) = 0"""
    P = policy.values if isinstance(policy, PowerPolicy) else np.asarray(policy, dtype=float)
    if P.shape != g.shape:
        raise ShapeError(f"policy has shape {P.shape}, grid expects {g.shape}")
    if interference.i_mf.shape != (g.n_time + 1,):
        raise ShapeError(f"interference trace has {interference.i_mf.shape[0]} points, grid has {g.n_time + 1}")

    mu = np.zeros(g.shape)
    for n in range(g.n_time, 0, -1):
        mu[n - 1] = hjb_step(p, mu[n], P[n], p_s, interference.i_mf[n], g)
    return Costate(mu)


def costate_gradient(mu: Costate, g: Grid) -> np.ndarray:
    return mu.energy_gradient(g)


def initial_policy(p: SystemParams, g: Grid, fraction: float) -> np.ndarray:
    """Constant fraction of P_max on every cell with e > 0"""
    P = np.full(g.shape, fraction * p.p_max)
    P[:, 0] = 0.0
    return P


def full_power_policy(p: SystemParams, g: Grid) -> PowerPolicy:
    return PowerPolicy(initial_policy(p, g, 1.0))


def depleted_fraction(m: MeanField, g: Grid) -> float:
    """Share of devices whose budget is exhausted at the end of the frame"""
    return float(m.values[-1, 0] * g.de)


def _policy_update(p: SystemParams, mu: Costate, fp: FixedPointResult, g: Grid) -> np.ndarray:
    dmu = costate_gradient(mu, g)
    P_new = optimal_power_update(p, dmu, fp.p_s, fp.interference.i_mf[:, None])
    P_new[:, 0] = 0.0
    return P_new


def evaluate_policy(
    p: SystemParams,
    g: Grid,
    m0: np.ndarray,
    policy: Union[PowerPolicy, np.ndarray],
    opts: Optional[SolverOptions] = None,
) -> EquilibriumResult:
    """Population response to a fixed policy, without optimizing it"""
    opts = opts or SolverOptions()
    validate_grid(p, g)
    policy = policy if isinstance(policy, PowerPolicy) else PowerPolicy(policy)
    policy.check_bounds(p.p_max)

    m = fpk_forward(m0, policy, g)
    fp = fixed_point_ps_pia(p, policy, m, g, opts.fixed_point)
    mu = hjb_backward(p, policy, fp.p_s, fp.interference, g)
    return EquilibriumResult(
        policy=policy,
        mean_field=m,
        costate=mu,
        p_s=fp.p_s,
        pi_a=fp.pi_a,
        interference=fp.interference,
        iterations=0,
        final_residual=0.0,
        converged=fp.converged,
        tol=opts.resolved_tol(p),
        mass_error=m.max_mass_error(g),
        fixed_point_converged=fp.converged,
    )


def solve_equilibrium(
    p: SystemParams,
    g: Grid,
    m0: np.ndarray,
    opts: Optional[SolverOptions] = None,
) -> EquilibriumResult:
    """Forward-backward sweep for the mean-field equilibrium policy.

    Each iteration transports the population under the current policy,
    settles the queue coupling, sweeps the costate back and moves the
    policy toward the pointwise optimum. Non-convergence is reported
    through the result, never raised.
    """
    opts = opts or SolverOptions()
    cfl = validate_grid(p, g)
    m0 = check_density_slice(m0, g)
    tol = opts.resolved_tol(p)
    omega = opts.damping

    logger.info("mfg.solve.starting", cfl=cfl, tol=tol, max_iters=opts.max_iters, shape=g.shape)

    P = initial_policy(p, g, opts.p0_init)
    history = []
    converged = False
    iterations = 0
    for iterations in range(1, opts.max_iters + 1):
        m = fpk_forward(m0, P, g)
        fp = fixed_point_ps_pia(p, P, m, g, opts.fixed_point)
        mu = hjb_backward(p, P, fp.p_s, fp.interference, g)
        P_new = _policy_update(p, mu, fp, g)

        residual = float(np.max(np.abs(P_new - P)))
        history.append(residual)
        P = (1.0 - omega) * P + omega * P_new
        logger.debug("mfg.iteration", iteration=iterations, residual=residual, p_s=fp.p_s, pi_a=fp.pi_a)
        if residual < tol:
            converged = True
            break

    policy = PowerPolicy(P)
    m = fpk_forward(m0, policy, g)
    fp = fixed_point_ps_pia(p, policy, m, g, opts.fixed_point)
    mu = hjb_backward(p, policy, fp.p_s, fp.interference, g)

    final_residual = history[-1] if history else 0.0
    if converged:
        logger.info("mfg.converged", iterations=iterations, residual=final_residual, p_s=fp.p_s, pi_a=fp.pi_a)
    else:
        logger.warning("mfg.not_converged", iterations=iterations, residual=final_residual, tol=tol)

    return EquilibriumResult(
        policy=policy,
        mean_field=m,
        costate=mu,
        p_s=fp.p_s,
        pi_a=fp.pi_a,
        interference=fp.interference,
        iterations=iterations,
        final_residual=final_residual,
        converged=converged,
        tol=tol,
        history=history,
        mass_error=m.max_mass_error(g),
        fixed_point_converged=fp.converged,
    )


def stationarity_gap(result: EquilibriumResult, p: SystemParams, g: Grid) -> np.ndarray:
    """Signed ∂_P F − ∂_e μ on interior cells, NaN elsewhere.

    A cell is interior when the undamped update from the final costate
    lies strictly inside (0, P_max) by more than the solver tolerance, so
    damped cells resting next to a bound are not counted.
    """
    P = result.policy.values
    i_mf = np.broadcast_to(result.interference.i_mf[:, None], P.shape)
    dmu = costate_gradient(result.costate, g)
    update = optimal_power_update(p, dmu, result.p_s, i_mf)
    interior = (update > result.tol) & (update < p.p_max - result.tol)
    interior[:, 0] = False
    gap = np.full(P.shape, np.nan)
    if result.p_s > 0 and np.any(interior):
        gap[interior] = (cost_gradient(p, P, i_mf, result.p_s) - dmu)[interior]
    return gap


def first_order_residual(result: EquilibriumResult, p: SystemParams, g: Grid) -> float:
    """Largest |∂_P F − ∂_e μ| over interior cells; 0 when there are none"""
    gap = stationarity_gap(result, p, g)
    if np.all(np.isnan(gap)):
        return 0.0
    return float(np.nanmax(np.abs(gap)))


def refine_transport(
    g: Grid, factor: int, policy: Union[PowerPolicy, np.ndarray], m0: np.ndarray
) -> Tuple[Grid, np.ndarray, np.ndarray]:
    """Carry a policy and initial density onto a grid ``factor`` times finer.

    Fine time steps read the coarse step they fall in and fine energy
    nodes the nearest coarse node, which is how a device integrating
    dE = −P dt reads the coarse policy. Each coarse cell's mass is spread
    evenly over the fine nodes that snap to it.
    """
    if factor < 1:
        raise ParameterError("factor", f"must be a positive integer, got {factor}")
    fine = Grid(n_time=g.n_time * factor, n_energy=g.n_energy * factor, t_frame=g.t_frame, e_max=g.e_max)
    P = policy.values if isinstance(policy, PowerPolicy) else np.asarray(policy, dtype=float)
    m0 = check_density_slice(m0, g)

    rows = np.minimum(np.arange(fine.n_time + 1) // factor, g.n_time)
    cols = g.energy_index(fine.energies)
    counts = np.bincount(cols, minlength=g.n_energy + 1)
    fine_m0 = m0[cols] * g.de / (counts[cols] * fine.de)
    return fine, P[np.ix_(rows, cols)], fine_m0


def coarsen_density(m_slice: np.ndarray, fine: Grid, g: Grid) -> np.ndarray:
    """Cell masses of a fine density slice, gathered onto the coarse nodes"""
    masses = np.zeros(g.n_energy + 1)
    np.add.at(masses, g.energy_index(fine.energies), np.asarray(m_slice, dtype=float) * fine.de)
    return masses
