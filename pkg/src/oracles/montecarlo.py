# src/oracles/montecarlo.py

from collections import deque
from dataclasses import dataclass
from typing import Any, Iterable, Optional, Sequence, Union

import numpy as np
import structlog
from scipy import stats
from scipy.spatial import cKDTree

from src.errors import InsufficientSamplesError, ParameterError
from src.models.fields import PowerPolicy, check_density_slice
from src.models.params import Grid, SystemParams
from src.models.results import Estimate, NetworkSample
from src.solvers.geometry import active_count_pmf, nearest_distance_cdf

logger = structlog.get_logger()

SeedLike = Union[None, int, np.random.SeedSequence, np.random.Generator]

KS_CRITICAL = 1.63
MIN_DISTANCES = 10_000
MIN_CELLS = 10_000
MIN_FRAMES = 100_000


def make_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def spawn_seeds(seed: SeedLike, n: int) -> list:
    """Independent child streams, one per replication"""
    if isinstance(seed, np.random.Generator):
        return seed.spawn(n)
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return seed.spawn(n)


def estimate_mean(values: np.ndarray) -> Estimate:
    """Sample mean with its standard error"""
    n = len(values)
    if n == 0:
        return Estimate(mean=float("nan"), se=float("nan"), n=0)
    se = float(np.std(values, ddof=1) / np.sqrt(n)) if n > 1 else float("inf")
    return Estimate(mean=float(np.mean(values)), se=se, n=n)


def tv_distance(p: np.ndarray, q: np.ndarray) -> float:
    """Total variation between two probability vectors"""
    return 0.5 * float(np.sum(np.abs(np.asarray(p) - np.asarray(q))))


def sample_ppp(intensity: float, radius: float, seed: SeedLike = None) -> np.ndarray:
    """Homogeneous Poisson points in the disk of given radius, shape (n, 2)"""
    if intensity < 0:
        raise ParameterError("intensity", f"must be nonnegative, got {intensity}")
    if radius <= 0:
        raise ParameterError("radius", f"must be strictly positive, got {radius}")
    rng = make_rng(seed)
    n = rng.poisson(intensity * np.pi * radius**2)
    r = radius * np.sqrt(rng.random(n))
    phi = 2.0 * np.pi * rng.random(n)
    return np.column_stack([r * np.cos(phi), r * np.sin(phi)])


def sample_network(
    p: SystemParams,
    radius: float,
    seed: SeedLike = None,
    device_intensity: Optional[float] = None,
) -> NetworkSample:
    """BS and device PPPs with nearest-BS association and unit-mean fading"""
    rng = make_rng(seed)
    bs = sample_ppp(p.lambda_s, radius, rng)
    devices = sample_ppp(p.lambda_u if device_intensity is None else device_intensity, radius, rng)
    if len(bs) and len(devices):
        _, associations = cKDTree(bs).query(devices)
    else:
        associations = np.full(len(devices), -1, dtype=int)
    fading = rng.exponential(1.0, len(devices))
    return NetworkSample(
        bs_points=bs,
        device_points=devices,
        associations=np.asarray(associations, dtype=int),
        fading=fading,
        radius=radius,
        rng_seed=seed if isinstance(seed, (int, np.random.SeedSequence)) else None,
    )


@dataclass(frozen=True)
class EmpiricalCdf:
    """Empirical law of serving distances with its KS distance to the PPP law"""

    distances: np.ndarray
    ks_statistic: float

    @property
    def n(self) -> int:
        return len(self.distances)

    @property
    def ks_bound(self) -> float:
        return KS_CRITICAL / np.sqrt(self.n)

    @property
    def passes(self) -> bool:
        return self.ks_statistic < self.ks_bound

    def evaluate(self, r: Any) -> Any:
        value = np.searchsorted(self.distances, np.asarray(r, dtype=float), side="right") / self.n
        return float(value) if np.ndim(value) == 0 else value


def _inner_distances(samples: Iterable[NetworkSample]) -> np.ndarray:
    chunks = [s.distances[s.inner_mask(s.device_points)] for s in samples]
    return np.sort(np.concatenate(chunks)) if chunks else np.zeros(0)


def empirical_distance_cdf(
    p: SystemParams,
    samples: Sequence[NetworkSample],
    min_samples: int = MIN_DISTANCES,
) -> EmpiricalCdf:
    """Serving-distance CDF from devices in the inner half of each disk.

    Raises:
        InsufficientSamplesError: fewer than ``min_samples`` distances
    """
    d = _inner_distances(samples)
    if len(d) < min_samples:
        raise InsufficientSamplesError("serving distances", len(d), min_samples)
    ks = stats.kstest(d, lambda r: nearest_distance_cdf(p, r)).statistic
    return EmpiricalCdf(distances=d, ks_statistic=float(ks))


@dataclass(frozen=True)
class EmpiricalPmf:
    """Per-cell active-device counts against the gamma–Poisson law"""

    counts: np.ndarray
    pmf: np.ndarray
    analytic: np.ndarray
    tv: float

    @property
    def n_cells(self) -> int:
        return len(self.counts)

    @property
    def mean(self) -> Estimate:
        return estimate_mean(self.counts.astype(float))


def empirical_active_count(
    p: SystemParams,
    pi_a: float,
    samples: Sequence[NetworkSample],
    seed: SeedLike = None,
    min_cells: int = MIN_CELLS,
) -> EmpiricalPmf:
    """Active devices per channel in the cells of interior base stations.

    Each device is independently active on the observed channel with
    probability (1 − p_b)π_a/L.
    """
    rng = make_rng(seed)
    keep = (1.0 - p.p_b) * pi_a / p.n_channels
    counts = []
    for s in samples:
        inner = np.flatnonzero(s.inner_mask(s.bs_points))
        if len(inner) == 0:
            continue
        active = rng.random(len(s.device_points)) < keep
        per_bs = np.bincount(s.associations[active], minlength=len(s.bs_points))
        counts.append(per_bs[inner])
    counts = np.concatenate(counts) if counts else np.zeros(0, dtype=int)
    if len(counts) < min_cells:
        raise InsufficientSamplesError("interior cells", len(counts), min_cells)

    k_max = max(int(counts.max()), 60)
    pmf = np.bincount(counts, minlength=k_max + 1)[: k_max + 1] / len(counts)
    analytic = np.asarray(active_count_pmf(p, pi_a, np.arange(k_max + 1)))
    tv = 0.5 * (np.sum(np.abs(pmf - analytic)) + max(0.0, 1.0 - analytic.sum()))
    return EmpiricalPmf(counts=counts, pmf=pmf, analytic=analytic, tv=float(tv))


def sample_active_counts_mixture(p: SystemParams, pi_a: float, n: int, seed: SeedLike = None) -> np.ndarray:
    """N ~ Poisson(λ_a V) with V the gamma cell area"""
    rng = make_rng(seed)
    c = p.gamma_shape
    area = rng.gamma(c, 1.0 / (p.lambda_s * c), n)
    return rng.poisson(float(p.active_density(pi_a)) * area)


def _capped_gain(r: np.ndarray, alpha: float) -> np.ndarray:
    return np.maximum(r, 1.0) ** (-alpha)


def estimate_interference(
    p: SystemParams,
    pi_a: float,
    power: float,
    radius: float,
    replications: int,
    seed: SeedLike = None,
) -> Estimate:
    """Interference at the disk center from active devices, path loss capped at 1"""
    if not p.alpha > 2:
        raise ParameterError("alpha", f"alpha must exceed 2, got {p.alpha}")
    if power == 0:
        return Estimate(mean=0.0, se=0.0, n=replications)
    lambda_a = float(p.active_density(pi_a))
    totals = np.empty(replications)
    for k, child in enumerate(spawn_seeds(seed, replications)):
        pts = sample_ppp(lambda_a, radius, child)
        totals[k] = power * _capped_gain(np.hypot(pts[:, 0], pts[:, 1]), p.alpha).sum()
    return estimate_mean(totals)


def estimate_p_theta(
    p: SystemParams,
    power: float,
    pi_a: float,
    replications: int,
    seed: SeedLike = None,
    radius: float = 10.0,
    interferer_power: Optional[float] = None,
) -> Estimate:
    """Fraction of draws whose SINR clears θ.

    The serving distance follows the nearest-BS law, the desired link is
    uncapped, and interferers form a fresh active PPP with Rayleigh
    fading and capped path loss.
    """
    interferer_power = power if interferer_power is None else interferer_power
    lambda_a = float(p.active_density(pi_a))
    hits = np.empty(replications)
    for k, child in enumerate(spawn_seeds(seed, replications)):
        rng = make_rng(child)
        r = np.sqrt(-np.log1p(-rng.random()) / (np.pi * p.lambda_s))
        signal = power * rng.exponential() * r ** (-p.alpha)
        pts = sample_ppp(lambda_a, radius, rng)
        fading = rng.exponential(1.0, len(pts))
        interference = interferer_power * np.sum(fading * _capped_gain(np.hypot(pts[:, 0], pts[:, 1]), p.alpha))
        hits[k] = signal >= p.theta * (p.sigma0 + interference)
    mean = float(hits.mean())
    return Estimate(mean=mean, se=float(np.sqrt(mean * (1.0 - mean) / replications)), n=replications)


@dataclass(frozen=True)
class QueueSimulation:
    """Frame-by-frame trace summary of one device queue"""

    occupancy: np.ndarray
    delays: np.ndarray
    attempts: np.ndarray
    n_frames: int
    mean_queue: float
    mean_queue_se: float

    @property
    def mean_delay(self) -> Estimate:
        return estimate_mean(self.delays.astype(float))

    @property
    def mean_attempts(self) -> Estimate:
        return estimate_mean(self.attempts.astype(float))


def simulate_queue(
    p_a: float,
    p_b: float,
    p_s: float,
    M: int,
    n_frames: int,
    seed: SeedLike = None,
    min_frames: int = MIN_FRAMES,
) -> QueueSimulation:
    """Discrete-event run of the queue dynamics.

    In each frame the head packet, if any, is delivered with probability
    (1 − p_b)p_s; then an arrival joins unless the queue is full. A packet
    arriving to an empty queue waits for the next frame.
    """
    if n_frames < min_frames:
        raise InsufficientSamplesError("queue frames", n_frames, min_frames)
    rng = make_rng(seed)
    arrivals = rng.random(n_frames) < p_a
    barred = rng.random(n_frames) < p_b
    success = rng.random(n_frames) < p_s

    occupancy = np.zeros(M + 1, dtype=np.int64)
    trace = np.empty(n_frames, dtype=np.int64)
    queue: deque = deque()
    delays, attempts = [], []
    head_since = 0
    for t in range(n_frames):
        if queue and not barred[t] and success[t]:
            delays.append(t - queue.popleft())
            attempts.append(t - head_since)
            head_since = t
        if arrivals[t] and len(queue) < M:
            if not queue:
                head_since = t
            queue.append(t)
        q = len(queue)
        occupancy[q] += 1
        trace[t] = q

    batches = np.array_split(trace.astype(float), 100)
    batch_means = np.array([b.mean() for b in batches])
    logger.debug("montecarlo.queue.complete", frames=n_frames, delivered=len(delays), mean_queue=float(trace.mean()))
    return QueueSimulation(
        occupancy=occupancy / n_frames,
        delays=np.asarray(delays, dtype=np.int64),
        attempts=np.asarray(attempts, dtype=np.int64),
        n_frames=n_frames,
        mean_queue=float(trace.mean()),
        mean_queue_se=float(batch_means.std(ddof=1) / np.sqrt(len(batch_means))),
    )


def particle_transport(
    m0: np.ndarray,
    policy: Union[PowerPolicy, np.ndarray],
    n_particles: int,
    g: Grid,
    seed: SeedLike = None,
) -> np.ndarray:
    """Energy histograms of individually simulated devices, one row per time index.

    Initial energies are drawn from m0 (uniform within each cell), then
    advanced by explicit Euler steps of dE = −P(t, E)dt with P read at
    the nearest lattice point. Rows are densities on the energy grid.
    """
    m0 = check_density_slice(m0, g)
    P = policy.values if isinstance(policy, PowerPolicy) else np.asarray(policy, dtype=float)
    rng = make_rng(seed)

    cells = rng.choice(g.n_energy + 1, size=n_particles, p=m0 * g.de / np.sum(m0 * g.de))
    energy = np.clip((cells + rng.random(n_particles) - 0.5) * g.de, 0.0, g.e_max)

    hist = np.empty(g.shape)
    for n in range(g.n_time + 1):
        idx = g.energy_index(energy)
        hist[n] = np.bincount(idx, minlength=g.n_energy + 1) / (n_particles * g.de)
        if n < g.n_time:
            energy = np.maximum(energy - P[n, idx] * g.dt, 0.0)
    return hist
