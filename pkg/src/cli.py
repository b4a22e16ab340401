# src/cli.py

from pathlib import Path
from typing import List, Optional

import structlog
import typer
from rich.console import Console

from src.app import configure_logging, create_app
from src.config import ExperimentConfig, load_config
from src.errors import ConfigError, MeanFieldError
from src.reporting import render_table, summary_frame, validate_frame

DEFAULT_CONFIG = Path("config/experiment.yml")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FLAGGED = 2

app = typer.Typer(help="Mean-field power control for grant-free IoT uplinks", no_args_is_help=True)


def _load(
    config_path: Optional[Path],
    out: Optional[Path],
    overrides: Optional[List[str]],
    workers: Optional[int],
    seed: Optional[int],
) -> ExperimentConfig:
    """Resolve the config file and fold CLI flags in as overrides"""
    if config_path is None and DEFAULT_CONFIG.exists():
        config_path = DEFAULT_CONFIG
    if config_path is not None and not config_path.exists():
        raise ConfigError(f"Config file does not exist: {config_path}")

    items = list(overrides or [])
    if out is not None:
        items.append(f"output={out}")
    if workers is not None:
        items.append(f"workers={workers}")
    if seed is not None:
        items.append(f"seed={seed}")
    return load_config(config_path, items)


def _fail(logger, event: str, e: Exception) -> None:
    logger.exception(event, error=str(e))
    typer.echo(f"Error: {str(e)}", err=True)
    raise typer.Exit(EXIT_ERROR)


ConfigOption = typer.Option(None, "--config", "-c", help="Path to configuration file")
OutOption = typer.Option(None, "--out", "-o", help="Output directory for CSV files")
SetOption = typer.Option(None, "--set", "-s", help="Override a config key, e.g. --set lambda_s=5")
WorkersOption = typer.Option(None, "--workers", "-w", help="Parallel sweep workers")
SeedOption = typer.Option(None, "--seed", help="Monte Carlo seed")
VerboseOption = typer.Option(False, "--verbose", "-v", help="Enable verbose logging")


@app.command()
def solve(
    config_path: Optional[Path] = ConfigOption,
    out: Optional[Path] = OutOption,
    overrides: Optional[List[str]] = SetOption,
    verbose: bool = VerboseOption,
):
    """Solve the equilibrium and write policy, mean field, costate and summary CSVs"""
    configure_logging(verbose)
    logger = structlog.get_logger()

    try:
        config = _load(config_path, out, overrides, None, None)
        outcome = create_app(config, verbose).solve()
    except (MeanFieldError, OSError, ValueError) as e:
        _fail(logger, "solve.failed", e)

    render_table("Equilibrium summary", summary_frame(outcome.summary), Console())
    typer.echo(f"Results saved to: {config.output}")
    if not outcome.converged:
        typer.echo("Warning: equilibrium iteration did not converge", err=True)
        raise typer.Exit(EXIT_FLAGGED)


@app.command()
def sweep(
    config_path: Optional[Path] = ConfigOption,
    out: Optional[Path] = OutOption,
    overrides: Optional[List[str]] = SetOption,
    workers: Optional[int] = WorkersOption,
    verbose: bool = VerboseOption,
):
    """Solve one equilibrium per value of the sweep axis and write sweep.csv"""
    configure_logging(verbose)
    logger = structlog.get_logger()

    try:
        config = _load(config_path, out, overrides, workers, None)
        outcome = create_app(config, verbose).sweep()
    except (MeanFieldError, OSError, ValueError) as e:
        _fail(logger, "sweep.failed", e)

    render_table(f"Sweep over {outcome.axis}", outcome.table, Console())
    typer.echo(f"Results saved to: {outcome.path}")
    if not outcome.converged:
        typer.echo("Warning: some sweep points did not converge", err=True)
        raise typer.Exit(EXIT_FLAGGED)


@app.command()
def validate(
    config_path: Optional[Path] = ConfigOption,
    out: Optional[Path] = OutOption,
    overrides: Optional[List[str]] = SetOption,
    seed: Optional[int] = SeedOption,
    verbose: bool = VerboseOption,
):
    """Compare every closed form against its Monte Carlo estimate"""
    configure_logging(verbose)
    logger = structlog.get_logger()

    try:
        config = _load(config_path, out, overrides, None, seed)
        outcome = create_app(config, verbose).validate()
    except (MeanFieldError, OSError, ValueError) as e:
        _fail(logger, "validate.failed", e)

    render_table("Oracle checks", validate_frame(outcome.checks), Console())
    typer.echo(f"Results saved to: {outcome.path}")
    if not outcome.passed:
        typer.echo("Warning: some checks failed", err=True)
        raise typer.Exit(EXIT_FLAGGED)


def main():
    app()


if __name__ == "__main__":
    app()
