# src/app.py

import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
import structlog
from joblib import Parallel, delayed

from src.config import ExperimentConfig
from src.models.results import EquilibriumResult, OracleCheck
from src.oracles.assurance import OracleSuite, suite_passed
from src.reporting import (
    cross_section_frame,
    field_frame,
    summary_frame,
    sweep_frame,
    validate_frame,
    write_csv,
)
from src.solvers.mfg import (
    depleted_fraction,
    evaluate_policy,
    first_order_residual,
    full_power_policy,
    solve_equilibrium,
)
from src.solvers.queueing import queue_metrics


def configure_logging(verbose: bool = False) -> None:
    """Key-value structlog output on stderr so CSV and tables keep stdout"""
    structlog.configure(
        processors=[
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.dev.ConsoleRenderer(colors=False),
        ],
        wrapper_class=structlog.make_filtering_bound_logger(logging.DEBUG if verbose else logging.INFO),
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
        cache_logger_on_first_use=False,
    )


@dataclass
class SolveOutcome:
    result: EquilibriumResult
    summary: Dict[str, Any]
    paths: Dict[str, Path] = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.result.converged


@dataclass
class SweepOutcome:
    axis: str
    table: pd.DataFrame
    path: Optional[Path] = None

    @property
    def converged(self) -> bool:
        return bool(self.table["converged"].all())


@dataclass
class ValidateOutcome:
    checks: List[OracleCheck]
    path: Optional[Path] = None

    @property
    def passed(self) -> bool:
        return suite_passed(self.checks)


def _solve_point(config: ExperimentConfig, baseline: bool):
    """Equilibrium and queue metrics for one configuration"""
    p = config.system_params()
    g = config.grid()
    m0 = config.initial_density(g)
    opts = config.solver_options()

    result = solve_equilibrium(p, g, m0, opts)
    metrics = queue_metrics(p, result.p_s)
    summary = {
        "p_s": result.p_s,
        "pi_a": result.pi_a,
        "T_h": metrics.throughput,
        "E_Nt": metrics.avg_transmissions,
        "Q": metrics.avg_queue,
        "D": metrics.avg_delay,
        "iterations": result.iterations,
        "residual": result.final_residual,
        "depleted_fraction": depleted_fraction(result.mean_field, g),
        "converged": result.converged,
        "delay_defined": metrics.delay_defined,
        "saturated": metrics.saturated,
        "baseline_depleted_fraction": np.nan,
        "cfl": p.p_max * g.dt / g.de,
        "stationarity_gap": first_order_residual(result, p, g),
    }
    if baseline:
        reference = evaluate_policy(p, g, m0, full_power_policy(p, g), opts)
        summary["baseline_depleted_fraction"] = depleted_fraction(reference.mean_field, g)
    return result, summary


def _sweep_point(config: ExperimentConfig, axis: str, value: float, verbose: bool) -> Dict[str, Any]:
    configure_logging(verbose)
    logger = structlog.get_logger()
    _, summary = _solve_point(config, baseline=False)
    row = {axis: value, **{k: summary[k] for k in ("p_s", "pi_a", "T_h", "D", "Q", "E_Nt", "converged")}}
    logger.info("sweep.point.complete", axis=axis, value=value, converged=row["converged"], p_s=row["p_s"])
    return row


class ExperimentApp:
    """Runs the solve, sweep and validate pipelines for one configuration"""

    def __init__(self, config: ExperimentConfig, verbose: bool = False):
        self.config = config
        self.verbose = verbose
        self.logger = structlog.get_logger()
        self.logger.info("app.initialized", output=str(config.output))

    @property
    def output(self) -> Path:
        return Path(self.config.output)

    def solve(self) -> SolveOutcome:
        """Equilibrium policy, mean field and costate plus the summary row"""
        self.logger.info("app.solve.starting", lambda_s=self.config.lambda_s, p_a=self.config.p_a)

        try:
            result, summary = _solve_point(self.config, baseline=self.config.baseline)
            g = self.config.grid()
            paths = {
                "policy": write_csv(field_frame(result.policy, g), self.output / "policy.csv"),
                "meanfield": write_csv(field_frame(result.mean_field, g), self.output / "meanfield.csv"),
                "costate": write_csv(field_frame(result.costate, g), self.output / "costate.csv"),
                "crosssection": write_csv(
                    cross_section_frame(result.mean_field, g, self.config.cross_section_levels),
                    self.output / "crosssection.csv",
                ),
                "summary": write_csv(summary_frame(summary), self.output / "summary.csv"),
            }
            self.logger.info(
                "app.solve.complete",
                converged=result.converged,
                iterations=result.iterations,
                depleted_fraction=summary["depleted_fraction"],
            )
            return SolveOutcome(result=result, summary=summary, paths=paths)

        except Exception as e:
            self.logger.exception("app.solve.failed", error=str(e))
            raise

    def sweep(self) -> SweepOutcome:
        """One summary row per sweep value, in axis order"""
        axis = self.config.sweep()
        self.logger.info("app.sweep.starting", axis=axis.name, points=len(axis.values), workers=self.config.workers)

        try:
            points = self.config.sweep_points()
            rows = Parallel(n_jobs=self.config.workers)(
                delayed(_sweep_point)(cfg, axis.name, v, self.verbose) for cfg, v in zip(points, axis.values)
            )
            table = sweep_frame(axis.name, rows)
            path = write_csv(table, self.output / "sweep.csv")
            self.logger.info("app.sweep.complete", rows=len(table), path=str(path))
            return SweepOutcome(axis=axis.name, table=table, path=path)

        except Exception as e:
            self.logger.exception("app.sweep.failed", error=str(e))
            raise

    def validate(self) -> ValidateOutcome:
        """Every Monte Carlo oracle against its closed form"""
        self.logger.info("app.validate.starting", replications=self.config.replications, seed=self.config.seed)

        try:
            suite = OracleSuite(
                self.config.system_params(),
                self.config.grid(),
                self.config.mc_options(),
                checks=self.config.checks,
            )
            checks = suite.run()
            path = write_csv(validate_frame(checks), self.output / "validate.csv")
            self.logger.info("app.validate.complete", passed=suite_passed(checks), path=str(path))
            return ValidateOutcome(checks=checks, path=path)

        except Exception as e:
            self.logger.exception("app.validate.failed", error=str(e))
            raise


def create_app(config: ExperimentConfig, verbose: bool = False) -> ExperimentApp:
    """Application factory function"""
    return ExperimentApp(config, verbose=verbose)
