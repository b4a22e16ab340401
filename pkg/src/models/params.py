# src/models/params.py

import math
from typing import Any, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.errors import GridError, ParameterError

GAMMA_SHAPE = 3.575
CFL_SLACK = 1e-12


class SystemParams(BaseModel):
    """Network and protocol parameters.

    Units: lengths in km, densities per km², power in W, energy in J,
    time in s. Defaults are the reference deployment with λ_s = 10 BS/km²,
    J = 3 and one packet every five minutes.
    """

    model_config = ConfigDict(frozen=True)

    lambda_s: float = 10.0
    lambda_u: float = 3000.0
    p_b: float = 0.1
    p_a: float = 12.0 * 0.01 / 3600.0
    theta: float = 10.0
    j_mpr: int = 3
    n_channels: int = 30
    queue_size: int = 10
    p_max: float = 0.025
    t_frame: float = 0.01
    e_max: float = 1e-4
    sigma0: float = 1e-23
    alpha: float = 4.0
    gamma_shape: float = GAMMA_SHAPE

    @model_validator(mode="after")
    def _check_domain(self) -> "SystemParams":
        validate_params(self)
        return self

    def active_density(self, pi_a: Any) -> Any:
        """Per-channel density of devices attempting a transmission"""
        return self.lambda_u * (1.0 - self.p_b) * np.asarray(pi_a, dtype=float) / self.n_channels

    def with_updates(self, **changes: Any) -> "SystemParams":
        """Validated copy with some fields replaced"""
        return SystemParams.model_validate({**self.model_dump(), **changes})


def validate_params(p: SystemParams) -> None:
    """Check every SystemParams invariant, naming the first offending field.

    Raises:
        ParameterError: on the first violated invariant
    """
    for name in ("lambda_s", "lambda_u", "t_frame", "e_max", "sigma0"):
        value = getattr(p, name)
        if not math.isfinite(value) or value <= 0:
            raise ParameterError(name, f"must be strictly positive, got {value}")
    if not math.isfinite(p.p_max) or p.p_max < 0:
        raise ParameterError("p_max", f"must be nonnegative, got {p.p_max}")
    for name in ("p_b", "p_a"):
        value = getattr(p, name)
        if not 0.0 <= value <= 1.0:
            raise ParameterError(name, f"probability out of range [0, 1], got {value}")
    if not math.isfinite(p.theta) or p.theta < 0:
        raise ParameterError("theta", f"must be nonnegative, got {p.theta}")
    for name in ("j_mpr", "n_channels", "queue_size"):
        value = getattr(p, name)
        if int(value) != value or value < 1:
            raise ParameterError(name, f"must be a positive integer, got {value}")
    if not p.alpha > 2:
        raise ParameterError("alpha", f"alpha must exceed 2, got {p.alpha}")
    if p.gamma_shape != GAMMA_SHAPE:
        raise ParameterError("gamma_shape", f"must equal {GAMMA_SHAPE}, got {p.gamma_shape}")


class Grid(BaseModel):
    """Uniform time × energy lattice over [0, T_f] × [0, E_max]"""

    model_config = ConfigDict(frozen=True)

    n_time: int = Field(100, gt=0)
    n_energy: int = Field(30, gt=0)
    t_frame: float = Field(0.01, gt=0)
    e_max: float = Field(1e-4, gt=0)

    @classmethod
    def from_params(cls, p: SystemParams, n_time: int = 100, n_energy: int = 30) -> "Grid":
        return cls(n_time=n_time, n_energy=n_energy, t_frame=p.t_frame, e_max=p.e_max)

    @property
    def dt(self) -> float:
        return self.t_frame / self.n_time

    @property
    def de(self) -> float:
        return self.e_max / self.n_energy

    @property
    def shape(self) -> tuple:
        return (self.n_time + 1, self.n_energy + 1)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_time + 1) * self.dt

    @property
    def energies(self) -> np.ndarray:
        return np.arange(self.n_energy + 1) * self.de

    def energy_index(self, e: Any) -> Any:
        return np.clip(np.rint(np.asarray(e) / self.de), 0, self.n_energy).astype(int)

    def energy_of(self, i: Any) -> Any:
        return np.asarray(i) * self.de


def validate_grid(p: SystemParams, g: Grid) -> float:
    """Return the Courant number P_max·δt/δE of the grid.

    Raises:
        GridError: if the grid does not span the parameters' frame and
            energy budget, or if the Courant number exceeds 1
    """
    if not math.isclose(g.t_frame, p.t_frame, rel_tol=1e-12):
        raise GridError(f"grid spans {g.t_frame} s but the frame lasts {p.t_frame} s")
    if not math.isclose(g.e_max, p.e_max, rel_tol=1e-12):
        raise GridError(f"grid spans {g.e_max} J but the energy budget is {p.e_max} J")

    cfl = p.p_max * g.dt / g.de
    if cfl > 1.0 + CFL_SLACK:
        raise GridError(f"CFL condition violated: P_max*dt/dE = {cfl:.6g} exceeds 1", cfl=cfl)
    return cfl


class FixedPointOptions(BaseModel):
    """Controls of the coupled (p_s, π_a) iteration"""

    model_config = ConfigDict(frozen=True)

    tol: float = Field(1e-8, gt=0)
    max_iters: int = Field(500, gt=0)
    damping: float = Field(0.5, gt=0, le=1)
    p_s_init: float = Field(1.0, gt=0, le=1)


class SolverOptions(BaseModel):
    """Controls of the forward-backward equilibrium sweep.

    ``tol`` is a sup-norm tolerance on the policy update in watts; when
    unset it resolves to 1e-5·P_max. ``p0_init`` is the initial policy as
    a fraction of P_max on cells with e > 0.
    """

    model_config = ConfigDict(frozen=True)

    tol: Optional[float] = Field(None, gt=0)
    max_iters: int = Field(200, gt=0)
    damping: float = Field(0.5, gt=0, le=1)
    p0_init: float = Field(0.5, ge=0, le=1)
    fixed_point: FixedPointOptions = Field(default_factory=FixedPointOptions)

    def resolved_tol(self, p: SystemParams) -> float:
        if self.tol is not None:
            return self.tol
        return 1e-5 * p.p_max if p.p_max > 0 else 1e-12


class MonteCarloOptions(BaseModel):
    """Sample sizes and geometry of the simulation oracles"""

    model_config = ConfigDict(frozen=True)

    seed: int = 20240101
    replications: int = Field(1000, gt=0)
    radius: float = Field(10.0, gt=0)
    device_density: float = Field(300.0, gt=0)
