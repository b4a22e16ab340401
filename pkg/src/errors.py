# src/errors.py

from typing import List, Optional


class MeanFieldError(Exception):
    """Root of every error raised by the solver package"""


class ParameterError(MeanFieldError, ValueError):
    """A parameter violates its declared domain"""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class GridError(MeanFieldError, ValueError):
    """The discretization grid is inconsistent or unstable"""

    def __init__(self, message: str, cfl: Optional[float] = None):
        self.cfl = cfl
        super().__init__(message)


class ShapeError(MeanFieldError, ValueError):
    """Two arrays that must share a lattice do not"""


class InstabilityError(MeanFieldError, RuntimeError):
    """The explicit transport step produced a negative density"""


class DegenerateChainError(MeanFieldError, ValueError):
    """The queue chain cannot drain, so all mass drifts to the full state"""


class InfiniteServiceError(MeanFieldError, ValueError):
    """Zero throughput makes service time and delay infinite"""


class InsufficientSamplesError(MeanFieldError, ValueError):
    """A Monte Carlo estimator was handed fewer samples than its floor"""

    def __init__(self, what: str, got: int, required: int):
        self.got = got
        self.required = required
        super().__init__(f"{what}: {got} samples, at least {required} required")


class ConfigError(MeanFieldError, ValueError):
    """Experiment configuration could not be loaded or merged"""

    def __init__(self, message: str, details: Optional[List[str]] = None):
        self.details = details or []
        super().__init__(message)
