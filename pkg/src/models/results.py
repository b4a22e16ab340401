# src/models/results.py

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from src.models.fields import Costate, MeanField, PowerPolicy


@dataclass(frozen=True)
class InterferenceTrace:
    """Mean-field power and interference over the time indices"""

    i_mf: np.ndarray
    p_mf: np.ndarray

    def __post_init__(self):
        for name in ("i_mf", "p_mf"):
            values = np.array(getattr(self, name), dtype=float)
            values.setflags(write=False)
            object.__setattr__(self, name, values)

    @classmethod
    def silent(cls, n_points: int) -> "InterferenceTrace":
        return cls(i_mf=np.zeros(n_points), p_mf=np.zeros(n_points))


@dataclass(frozen=True)
class FixedPointResult:
    """Outcome of the coupled (p_s, π_a) iteration"""

    p_s: float
    pi_a: float
    interference: InterferenceTrace
    iterations: int
    converged: bool
    history: List[float] = field(default_factory=list)


@dataclass(frozen=True)
class EquilibriumResult:
    """Converged (or last) iterate of the forward-backward sweep"""

    policy: PowerPolicy
    mean_field: MeanField
    costate: Costate
    p_s: float
    pi_a: float
    interference: InterferenceTrace
    iterations: int
    final_residual: float
    converged: bool
    tol: float
    history: List[float] = field(default_factory=list)
    mass_error: float = 0.0
    fixed_point_converged: bool = True


@dataclass(frozen=True)
class MarkovModel:
    """Tridiagonal transition matrix of the per-device queue"""

    matrix: np.ndarray
    p_a: float
    p_b: float
    p_s: float
    queue_size: int

    @property
    def n_states(self) -> int:
        return self.queue_size + 1

    @property
    def up(self) -> float:
        """q_{j,j+1} for 0 < j < M"""
        return self.p_a * (1.0 - (1.0 - self.p_b) * self.p_s)

    @property
    def down(self) -> float:
        """q_{j,j-1} for 0 < j ≤ M"""
        return (1.0 - self.p_a) * (1.0 - self.p_b) * self.p_s


@dataclass(frozen=True)
class SteadyState:
    pi: np.ndarray
    pi_a: float


@dataclass(frozen=True)
class QueueMetrics:
    """Per-device performance at a steady state"""

    throughput: float
    avg_transmissions: float
    avg_queue: float
    avg_delay: float
    saturated: bool

    @property
    def delay_defined(self) -> bool:
        return bool(np.isfinite(self.avg_delay))


@dataclass(frozen=True)
class NetworkSample:
    """One spatial draw: BS and device points in a disk of radius R around center"""

    bs_points: np.ndarray
    device_points: np.ndarray
    associations: np.ndarray
    fading: np.ndarray
    radius: float
    center: Tuple[float, float] = (0.0, 0.0)
    rng_seed: Any = None

    @property
    def distances(self) -> np.ndarray:
        """Device to serving-BS distances"""
        if len(self.device_points) == 0:
            return np.zeros(0)
        if len(self.bs_points) == 0:
            return np.full(len(self.device_points), np.inf)
        return np.linalg.norm(self.device_points - self.bs_points[self.associations], axis=1)

    def shifted(self, offset: np.ndarray) -> "NetworkSample":
        """Rigidly translated copy; associations and fading carry over"""
        offset = np.asarray(offset, dtype=float)
        return NetworkSample(
            bs_points=self.bs_points + offset,
            device_points=self.device_points + offset,
            associations=self.associations,
            fading=self.fading,
            radius=self.radius,
            center=(self.center[0] + offset[0], self.center[1] + offset[1]),
            rng_seed=self.rng_seed,
        )

    def inner_mask(self, points: np.ndarray, fraction: float = 0.5) -> np.ndarray:
        """Points within fraction·R of the disk center"""
        return np.linalg.norm(points - np.asarray(self.center), axis=1) <= fraction * self.radius


@dataclass(frozen=True)
class Estimate:
    """Monte Carlo mean with its standard error"""

    mean: float
    se: float
    n: int = 0


class CheckStatus(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    INSUFFICIENT = "insufficient_precision"


@dataclass
class OracleCheck:
    """One analytic-versus-simulation comparison"""

    check: str
    analytic: float
    mc_mean: float
    mc_se: float
    status: CheckStatus
    detail: Optional[str] = None

    @property
    def passed(self) -> bool:
        return self.status != CheckStatus.FAIL

    def as_row(self) -> Dict[str, Any]:
        return {
            "check": self.check,
            "analytic": self.analytic,
            "mc_mean": self.mc_mean,
            "mc_se": self.mc_se,
            "pass": self.status == CheckStatus.PASS,
            "status": self.status.value,
        }
