# src/config.py

from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import structlog
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from pydantic.functional_validators import field_validator, model_validator

from src.errors import ConfigError, GridError, ParameterError, ShapeError
from src.models.fields import initial_density
from src.models.params import (
    FixedPointOptions,
    Grid,
    MonteCarloOptions,
    SolverOptions,
    SystemParams,
    validate_grid,
)
from src.oracles.assurance import KNOWN_CHECKS

SECONDS_PER_HOUR = 3600.0

SWEEP_AXES = (
    "lambda_s",
    "lambda_u",
    "J",
    "L",
    "M",
    "p_b",
    "theta",
    "arrival_rate_per_hour",
    "alpha",
)

M0_SHAPES = ("uniform", "increasing", "decreasing", "triangular")

INTEGER_KEYS = ("J", "L", "M")


class SweepAxis(BaseModel):
    """One swept parameter and its values, run in the given order"""

    name: str
    values: List[float]

    @field_validator("name")
    @classmethod
    def validate_name(cls, v: str) -> str:
        if v not in SWEEP_AXES:
            raise ValueError(f"unknown sweep axis {v!r}, expected one of {', '.join(SWEEP_AXES)}")
        return v

    @field_validator("values")
    @classmethod
    def validate_values(cls, v: List[float]) -> List[float]:
        if not v:
            raise ValueError("sweep_values must not be empty")
        return v


class ExperimentConfig(BaseModel):
    """Flat experiment configuration; every key defaults to the reference deployment"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    # network and protocol
    lambda_s: float = 10.0
    lambda_u: float = 3000.0
    p_b: float = 0.1
    arrival_rate_per_hour: float = 12.0
    theta: float = 10.0
    J: int = 3
    L: int = 30
    M: int = 10
    p_max: float = 0.025
    t_frame: float = 0.01
    e_max: float = 1e-4
    sigma0: float = 1e-23
    alpha: float = 4.0

    # grid
    X: int = 100
    Y: int = 30

    # equilibrium solver
    tol: Optional[float] = None
    max_iters: int = 200
    damping: float = 0.5
    tol2: float = 1e-8
    max_iters2: int = 500
    damping2: float = 0.5
    p0_init: float = 0.5
    m0_shape: Union[str, List[float]] = "uniform"
    baseline: bool = True

    # sweep
    sweep_axis: Optional[str] = None
    sweep_values: List[float] = Field(default_factory=list)

    # monte carlo
    seed: int = 20240101
    replications: int = 1000
    radius: float = 10.0
    device_density: float = 300.0
    checks: Optional[List[str]] = None

    # output
    output: Path = Path("output")
    workers: int = Field(1, ge=1)
    cross_section_levels: Optional[List[float]] = None

    @field_validator("arrival_rate_per_hour")
    @classmethod
    def validate_rate(cls, v: float) -> float:
        if v < 0:
            raise ValueError("arrival rate must be nonnegative")
        return v

    @field_validator("m0_shape")
    @classmethod
    def validate_m0_shape(cls, v: Union[str, List[float]]) -> Union[str, List[float]]:
        if isinstance(v, str) and v not in M0_SHAPES:
            raise ValueError(f"unknown m0_shape {v!r}, expected one of {', '.join(M0_SHAPES)} or a list of weights")
        return v

    @field_validator("checks")
    @classmethod
    def validate_checks(cls, v: Optional[List[str]]) -> Optional[List[str]]:
        for name in v or []:
            if name not in KNOWN_CHECKS:
                raise ValueError(f"unknown check {name!r}")
        return v

    @model_validator(mode="after")
    def validate_sweep(self) -> "ExperimentConfig":
        if self.sweep_values and self.sweep_axis is None:
            raise ValueError("sweep_values given without sweep_axis")
        return self

    @property
    def p_a(self) -> float:
        """Per-frame Bernoulli arrival probability"""
        return self.arrival_rate_per_hour * self.t_frame / SECONDS_PER_HOUR

    def system_params(self) -> SystemParams:
        return SystemParams(
            lambda_s=self.lambda_s,
            lambda_u=self.lambda_u,
            p_b=self.p_b,
            p_a=self.p_a,
            theta=self.theta,
            j_mpr=self.J,
            n_channels=self.L,
            queue_size=self.M,
            p_max=self.p_max,
            t_frame=self.t_frame,
            e_max=self.e_max,
            sigma0=self.sigma0,
            alpha=self.alpha,
        )

    def grid(self) -> Grid:
        return Grid(n_time=self.X, n_energy=self.Y, t_frame=self.t_frame, e_max=self.e_max)

    def solver_options(self) -> SolverOptions:
        return SolverOptions(
            tol=self.tol,
            max_iters=self.max_iters,
            damping=self.damping,
            p0_init=self.p0_init,
            fixed_point=FixedPointOptions(tol=self.tol2, max_iters=self.max_iters2, damping=self.damping2),
        )

    def mc_options(self) -> MonteCarloOptions:
        return MonteCarloOptions(
            seed=self.seed,
            replications=self.replications,
            radius=self.radius,
            device_density=self.device_density,
        )

    def initial_density(self, g: Grid):
        if isinstance(self.m0_shape, str):
            return initial_density(g, self.m0_shape)
        return initial_density(g, weights=self.m0_shape)

    def sweep(self) -> SweepAxis:
        if self.sweep_axis is None:
            raise ConfigError("sweep requires sweep_axis and sweep_values")
        try:
            return SweepAxis(name=self.sweep_axis, values=self.sweep_values)
        except ValidationError as e:
            details = _error_lines(e)
            raise ConfigError("invalid sweep axis: " + "; ".join(details), details=details) from e

    def with_value(self, key: str, value: Any) -> "ExperimentConfig":
        """Validated copy with one key replaced"""
        if key in INTEGER_KEYS:
            value = int(value)
        return validate_mapping({**self.model_dump(), key: value})

    def sweep_points(self) -> List["ExperimentConfig"]:
        """One fully validated config per sweep value, in axis order"""
        axis = self.sweep()
        points = []
        for value in axis.values:
            try:
                point = self.with_value(axis.name, value)
                point.validate_all()
            except ConfigError as e:
                raise ConfigError(f"sweep point {axis.name}={value:g}: {e}", details=e.details) from e
            points.append(point)
        return points

    def validate_all(self) -> float:
        """Check every derived object before execution; returns the CFL number"""
        try:
            p = self.system_params()
            g = self.grid()
            cfl = validate_grid(p, g)
            self.initial_density(g)
            self.solver_options()
            self.mc_options()
        except ValidationError as e:
            details = _error_lines(e)
            raise ConfigError("invalid parameters: " + "; ".join(details), details=details) from e
        except (ParameterError, GridError, ShapeError) as e:
            raise ConfigError(str(e)) from e
        if self.sweep_axis is not None:
            self.sweep()
        return cfl

    @classmethod
    def from_yaml(cls, path: Path, overrides: Optional[Sequence[str]] = None) -> "ExperimentConfig":
        """Load config from YAML, apply key=value overrides and validate"""
        logger = structlog.get_logger()
        try:
            with path.open() as f:
                data = yaml.safe_load(f) or {}
        except (OSError, yaml.YAMLError) as e:
            logger.exception("config.load_failed", path=str(path), error=str(e))
            raise ConfigError(f"cannot read config {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must be a key-value mapping")
        return validate_mapping(apply_overrides(data, overrides or []))


def _error_lines(e: ValidationError) -> List[str]:
    return [f"{'.'.join(str(x) for x in err['loc']) or 'config'}: {err['msg']}" for err in e.errors()]


def validate_mapping(data: Dict[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        details = _error_lines(e)
        raise ConfigError("invalid configuration: " + "; ".join(details), details=details) from e


def parse_override(item: str) -> tuple:
    """Split key=value, typing the value with YAML rules"""
    key, sep, raw = item.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError(f"override must look like key=value, got {item!r}")
    if key not in ExperimentConfig.model_fields:
        raise ConfigError(f"unknown config key {key!r}")
    try:
        return key, yaml.safe_load(raw)
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse value of {key}: {e}") from e


def apply_overrides(data: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    merged = dict(data)
    for item in overrides:
        key, value = parse_override(item)
        merged[key] = value
    return merged


def load_config(path: Optional[Path] = None, overrides: Optional[Sequence[str]] = None) -> ExperimentConfig:
    """Load and validate configuration

    Args:
        path: Path to the config file; reference defaults when None
        overrides: ``key=value`` strings applied on top of the file

    Returns:
        Validated ExperimentConfig instance

    Raises:
        ConfigError: If config loading or validation fails
    """
    logger = structlog.get_logger()

    try:
        logger.info("config.loading", path=str(path) if path else None, overrides=list(overrides or []))
        if path is None:
            config = validate_mapping(apply_overrides({}, overrides or []))
        else:
            config = ExperimentConfig.from_yaml(path, overrides)
        config.validate_all()
        logger.info("config.loaded", p_a=config.p_a, grid=(config.X, config.Y))
        return config

    except Exception as e:
        logger.exception("config.load_failed", error=str(e))
        raise
