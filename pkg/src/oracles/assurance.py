# src/oracles/assurance.py

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import structlog

from src.errors import InsufficientSamplesError
from src.models.fields import PowerPolicy, initial_density
from src.models.params import Grid, MonteCarloOptions, SystemParams
from src.models.results import CheckStatus, OracleCheck
from src.oracles import montecarlo as mc
from src.solvers.geometry import (
    collision_free_prob,
    interference_tail,
    mean_field_interference,
    nearest_distance_mean,
)
from src.solvers.mfg import (
    coarsen_density,
    fpk_forward,
    initial_policy,
    refine_transport,
    solve_equilibrium,
)
from src.solvers.queueing import (
    avg_queue,
    avg_transmissions,
    sinr_tail_integral,
    steady_state,
    throughput,
    transition_matrix,
)

Z_GUARD = 4.0
P_THETA_TOLERANCE = 0.03
QUEUE_TV_TOLERANCE = 0.01
COUNT_TV_TOLERANCE = 0.02
TRANSPORT_TV_TOLERANCE = 0.02

DEFAULT_CHECKS = (
    "distance_cdf",
    "active_count",
    "collision_free",
    "interference",
    "p_theta",
    "queue_steady_state",
    "queue_attempts",
    "particle_transport",
)

# need a full equilibrium solve, so only run when asked for
OPTIONAL_CHECKS = ("equilibrium_transport",)

KNOWN_CHECKS = DEFAULT_CHECKS + OPTIONAL_CHECKS

CHECK_PARAMS: Dict[str, Dict[str, Any]] = {
    "particle_transport": {"fraction": 0.25, "factor": 32},
    "equilibrium_transport": {"factor": 16},
}


@dataclass
class ValidationRule:
    """One named analytic-versus-simulation comparison"""

    name: str
    validator: str
    params: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def named(cls, name: str) -> "ValidationRule":
        return cls(name=name, validator=name, params=dict(CHECK_PARAMS.get(name, {})))


def _within(diff: float, se: float) -> CheckStatus:
    return CheckStatus.PASS if abs(diff) <= Z_GUARD * se else CheckStatus.FAIL


class OracleSuite:
    """Runs every Monte Carlo oracle against its closed form.

    Checks whose sample budget cannot resolve their tolerance are
    reported as insufficient precision instead of failing.
    """

    def __init__(self, p: SystemParams, g: Grid, opts: MonteCarloOptions, checks: Optional[Sequence[str]] = None):
        self.p = p
        self.g = g
        self.opts = opts
        self.logger = structlog.get_logger()
        self.rules = [ValidationRule.named(name) for name in (checks or DEFAULT_CHECKS)]
        self._seeds = dict(zip(KNOWN_CHECKS, np.random.SeedSequence(opts.seed).spawn(len(KNOWN_CHECKS))))

    @property
    def oracle_params(self) -> SystemParams:
        """Parameters of the spatial checks: all devices backlogged at the device density"""
        return self.p.with_updates(lambda_u=self.opts.device_density)

    def run(self) -> List[OracleCheck]:
        results = []
        for rule in self.rules:
            check = self._validate_rule(rule)
            self.logger.info(
                "validate.check",
                check=check.check,
                status=check.status.value,
                analytic=check.analytic,
                mc_mean=check.mc_mean,
                mc_se=check.mc_se,
                detail=check.detail,
            )
            results.append(check)
        return results

    def _validate_rule(self, rule: ValidationRule) -> OracleCheck:
        validator = getattr(self, f"_validate_{rule.validator}", None)
        if validator is None:
            raise ValueError(f"unknown validation check: {rule.validator}")
        try:
            return validator(self._seeds.get(rule.name, np.random.SeedSequence(self.opts.seed)), **rule.params)
        except InsufficientSamplesError as e:
            self.logger.warning("validate.insufficient_samples", check=rule.name, error=str(e))
            return OracleCheck(rule.name, float("nan"), float("nan"), float("nan"), CheckStatus.INSUFFICIENT, detail=str(e))

    def _networks(self, seed: np.random.SeedSequence, count: int, device_intensity: Optional[float] = None) -> List:
        p = self.oracle_params
        intensity = self.opts.device_density if device_intensity is None else device_intensity
        return [mc.sample_network(p, self.opts.radius, child, device_intensity=intensity) for child in seed.spawn(count)]

    def _validate_distance_cdf(self, seed) -> OracleCheck:
        """Serving distances of sparse devices, about one per eight cells"""
        p = self.oracle_params
        samples = self._networks(seed, max(1, self.opts.replications // 8), device_intensity=p.lambda_s / 8.0)
        cdf = mc.empirical_distance_cdf(p, samples)
        mean = mc.estimate_mean(cdf.distances)
        status = CheckStatus.PASS if cdf.passes else CheckStatus.FAIL
        return OracleCheck(
            "distance_cdf",
            nearest_distance_mean(p),
            mean.mean,
            mean.se,
            status,
            detail=f"ks={cdf.ks_statistic:.4g} bound={cdf.ks_bound:.4g} n={cdf.n}",
        )

    def _validate_active_count(self, seed) -> OracleCheck:
        p = self.oracle_params
        net_seed, thin_seed = seed.spawn(2)
        samples = self._networks(net_seed, max(1, self.opts.replications // 50))
        emp = mc.empirical_active_count(p, 1.0, samples, thin_seed)
        mean = emp.mean
        status = CheckStatus.PASS if emp.tv < COUNT_TV_TOLERANCE else CheckStatus.FAIL
        return OracleCheck(
            "active_count",
            float(p.active_density(1.0)) / p.lambda_s,
            mean.mean,
            mean.se,
            status,
            detail=f"tv={emp.tv:.4g} cells={emp.n_cells}",
        )

    def _validate_collision_free(self, seed) -> OracleCheck:
        p = self.oracle_params
        n = self.opts.replications * 100
        analytic = collision_free_prob(p, 1.0)
        if n < 10_000:
            raise InsufficientSamplesError("mixture draws", n, 10_000)
        counts = mc.sample_active_counts_mixture(p, 1.0, n, seed)
        hit = (counts <= p.j_mpr).astype(float)
        est = mc.estimate_mean(hit)
        return OracleCheck("collision_free", analytic, est.mean, est.se, _within(est.mean - analytic, est.se))

    def _validate_interference(self, seed) -> OracleCheck:
        p = self.oracle_params
        if self.opts.replications < 100:
            raise InsufficientSamplesError("interference replications", self.opts.replications, 100)
        lambda_a = float(p.active_density(1.0))
        power = p.p_max / 2.0
        radius = 50.0 / np.sqrt(lambda_a)
        analytic = mean_field_interference(p, 1.0, power)
        est = mc.estimate_interference(p, 1.0, power, radius, self.opts.replications, seed)
        tail = interference_tail(p.alpha, radius, lambda_a, power)
        mean = est.mean + tail
        return OracleCheck(
            "interference",
            analytic,
            mean,
            est.se,
            _within(mean - analytic, est.se),
            detail=f"radius={radius:.4g} tail={tail:.3g}",
        )

    def _validate_p_theta(self, seed) -> OracleCheck:
        """Degenerate field: every device at P_max, interferers at the mean power P_max/2"""
        p = self.oracle_params
        n = self.opts.replications * 10
        i_mf = mean_field_interference(p, 1.0, p.p_max / 2.0)
        b = np.pi * p.lambda_s
        a = p.theta * (p.sigma0 + i_mf) / p.p_max
        analytic = b * sinr_tail_integral(a, b, p.alpha)
        required = int(np.ceil((Z_GUARD * 0.5 / P_THETA_TOLERANCE) ** 2))
        if n < required:
            raise InsufficientSamplesError("SINR draws", n, required)
        est = mc.estimate_p_theta(
            p, p.p_max, 1.0, n, seed, radius=self.opts.radius, interferer_power=p.p_max / 2.0
        )
        status = CheckStatus.PASS if abs(est.mean - analytic) < P_THETA_TOLERANCE else CheckStatus.FAIL
        return OracleCheck("p_theta", analytic, est.mean, est.se, status, detail=f"a={a:.4g} b={b:.4g}")

    def _queue_run(self, seed):
        p_a, p_s = 0.3, 0.6
        n_frames = self.opts.replications * 1000
        sim = mc.simulate_queue(p_a, self.p.p_b, p_s, self.p.queue_size, n_frames, seed)
        ss = steady_state(transition_matrix(p_a, self.p.p_b, p_s, self.p.queue_size))
        return sim, ss, throughput(self.p.p_b, p_s)

    def _validate_queue_steady_state(self, seed) -> OracleCheck:
        sim, ss, _ = self._queue_run(seed)
        tv = mc.tv_distance(sim.occupancy, ss.pi)
        status = CheckStatus.PASS if tv < QUEUE_TV_TOLERANCE else CheckStatus.FAIL
        return OracleCheck(
            "queue_steady_state",
            avg_queue(ss),
            sim.mean_queue,
            sim.mean_queue_se,
            status,
            detail=f"tv={tv:.4g} frames={sim.n_frames}",
        )

    def _validate_queue_attempts(self, seed) -> OracleCheck:
        sim, _, T_h = self._queue_run(seed)
        analytic = avg_transmissions(T_h)
        est = sim.mean_attempts
        if est.n < 10_000:
            raise InsufficientSamplesError("delivered packets", est.n, 10_000)
        return OracleCheck("queue_attempts", analytic, est.mean, est.se, _within(est.mean - analytic, est.se))

    def _transport_budget(self) -> int:
        n = self.opts.replications * 100
        if n < 50_000:
            raise InsufficientSamplesError("particles", n, 50_000)
        return n

    def _transport_gaps(self, seed, m0: np.ndarray, policy: PowerPolicy, factor: int, n: int):
        """Final-slice cell masses of particles, the configured grid and its refinement"""
        g = self.g
        particles = mc.particle_transport(m0, policy, n, g, seed)[-1] * g.de
        upwind = fpk_forward(m0, policy, g).values[-1] * g.de
        fine, fine_policy, fine_m0 = refine_transport(g, factor, policy, m0)
        refined = coarsen_density(fpk_forward(fine_m0, fine_policy, fine).values[-1], fine, g)
        return particles, upwind, refined

    def _validate_particle_transport(self, seed, fraction: float, factor: int) -> OracleCheck:
        """Constant fraction of P_max, compared at T_f.

        Passes when the refined upwind scheme matches the particles; the
        smearing on the configured grid is reported in the detail.
        """
        n = self._transport_budget()
        g = self.g
        m0 = initial_density(g)
        policy = PowerPolicy(initial_policy(self.p, g, fraction))
        particles, upwind, refined = self._transport_gaps(seed, m0, policy, factor, n)

        tv = mc.tv_distance(particles, upwind)
        tv_refined = mc.tv_distance(particles, refined)
        energies = g.energies
        mc_mean = float(np.sum(energies * particles))
        spread = np.sqrt(max(float(np.sum(energies**2 * particles)) - mc_mean**2, 0.0))
        status = CheckStatus.PASS if tv_refined < TRANSPORT_TV_TOLERANCE else CheckStatus.FAIL
        return OracleCheck(
            "particle_transport",
            float(np.sum(energies * refined)),
            mc_mean,
            spread / np.sqrt(n),
            status,
            detail=f"tv={tv:.4g} tv_refined={tv_refined:.4g} fraction={fraction:g} factor={factor}",
        )

    def _validate_equilibrium_transport(self, seed, factor: int) -> OracleCheck:
        """Equilibrium policy: depleted share at T_f against devices moved along dE = −P dt"""
        n = self._transport_budget()
        m0 = initial_density(self.g)
        result = solve_equilibrium(self.p, self.g, m0)
        particles, upwind, refined = self._transport_gaps(seed, m0, result.policy, factor, n)

        tv = mc.tv_distance(particles, upwind)
        tv_refined = mc.tv_distance(particles, refined)
        depleted = float(particles[0])
        status = CheckStatus.PASS if tv_refined < TRANSPORT_TV_TOLERANCE else CheckStatus.FAIL
        return OracleCheck(
            "equilibrium_transport",
            float(refined[0]),
            depleted,
            float(np.sqrt(depleted * (1.0 - depleted) / n)),
            status,
            detail=(
                f"tv={tv:.4g} tv_refined={tv_refined:.4g} "
                f"upwind_depleted={upwind[0]:.4g} factor={factor} converged={result.converged}"
            ),
        )


def suite_passed(checks: Sequence[OracleCheck]) -> bool:
    return all(c.passed for c in checks)
