# src/models/fields.py

from dataclasses import dataclass
from enum import Enum
from typing import ClassVar, Optional, Sequence

import numpy as np

from src.errors import ParameterError, ShapeError
from src.models.params import Grid

MASS_TOLERANCE = 1e-9


class FieldRole(str, Enum):
    """What a lattice function represents"""
    POLICY = "policy"
    DENSITY = "density"
    COSTATE = "costate"


@dataclass(frozen=True)
class Field:
    """Real function on the (time, energy) lattice, indexed [n, i]"""

    values: np.ndarray
    role: ClassVar[FieldRole]

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise ShapeError(f"{self.role.value} field must be 2-D, got shape {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple:
        return self.values.shape

    def slice(self, n: int) -> np.ndarray:
        return self.values[n]

    def check_grid(self, g: Grid) -> None:
        if self.values.shape != g.shape:
            raise ShapeError(
                f"{self.role.value} field has shape {self.values.shape}, grid expects {g.shape}"
            )


@dataclass(frozen=True)
class PowerPolicy(Field):
    """Transmit power P(t, e) in watts"""

    role: ClassVar[FieldRole] = FieldRole.POLICY

    def check_bounds(self, p_max: float) -> None:
        if np.any(self.values < 0) or np.any(self.values > p_max):
            raise ParameterError("policy", f"values must lie in [0, {p_max}]")
        if np.any(self.values[:, 0] != 0):
            raise ParameterError("policy", "depleted devices (e = 0) must not transmit")


@dataclass(frozen=True)
class MeanField(Field):
    """Energy density m(t, e); every time slice carries unit mass"""

    role: ClassVar[FieldRole] = FieldRole.DENSITY

    @property
    def initial(self) -> np.ndarray:
        return self.values[0]

    def masses(self, g: Grid) -> np.ndarray:
        return self.values.sum(axis=1) * g.de

    def max_mass_error(self, g: Grid) -> float:
        return float(np.max(np.abs(self.masses(g) - 1.0)))


@dataclass(frozen=True)
class Costate(Field):
    """Lagrange multiplier μ(t, e) of the transport constraint"""

    role: ClassVar[FieldRole] = FieldRole.COSTATE

    def energy_gradient(self, g: Grid) -> np.ndarray:
        """Backward difference (μ_i − μ_{i−1})/δE, zero at e = 0"""
        grad = np.zeros_like(self.values)
        grad[:, 1:] = np.diff(self.values, axis=1) / g.de
        return grad


def check_density_slice(m_slice: np.ndarray, g: Grid, name: str = "m0") -> np.ndarray:
    m_slice = np.asarray(m_slice, dtype=float)
    if m_slice.shape != (g.n_energy + 1,):
        raise ShapeError(f"{name} has shape {m_slice.shape}, expected ({g.n_energy + 1},)")
    if np.any(m_slice < 0):
        raise ParameterError(name, "density must be nonnegative")
    mass = m_slice.sum() * g.de
    if abs(mass - 1.0) > MASS_TOLERANCE:
        raise ParameterError(name, f"density must carry unit mass, got {mass:.12g}")
    return m_slice


def density_from_weights(weights: Sequence[float], g: Grid) -> np.ndarray:
    """Normalize nonnegative per-cell weights into a unit-mass density slice"""
    w = np.asarray(weights, dtype=float)
    if w.shape != (g.n_energy + 1,):
        raise ShapeError(f"expected {g.n_energy + 1} energy weights, got {w.shape}")
    if np.any(w < 0) or w.sum() <= 0:
        raise ParameterError("m0", "weights must be nonnegative and not all zero")
    return w / (w.sum() * g.de)


def initial_density(g: Grid, shape: str = "uniform", weights: Optional[Sequence[float]] = None) -> np.ndarray:
    """Initial energy density m_0.

    Shapes: "uniform" (equal mass per cell), "increasing" (mass ∝ e),
    "decreasing" (mass ∝ E_max − e), "triangular" (peak at E_max/2), or
    explicit per-cell ``weights``.
    """
    if weights is not None:
        return density_from_weights(weights, g)

    e = g.energies
    if shape == "uniform":
        w = np.ones_like(e)
    elif shape == "increasing":
        w = e.copy()
    elif shape == "decreasing":
        w = g.e_max - e
    elif shape == "triangular":
        w = g.e_max / 2 - np.abs(e - g.e_max / 2)
    else:
        raise ParameterError("m0_shape", f"unknown initial density shape: {shape}")
    return density_from_weights(w, g)
