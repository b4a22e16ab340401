# src/reporting.py

from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd
import structlog
from rich.console import Console
from rich.table import Table

from src.models.fields import Field
from src.models.params import Grid
from src.models.results import OracleCheck

logger = structlog.get_logger()

SUMMARY_COLUMNS = [
    "p_s",
    "pi_a",
    "T_h",
    "E_Nt",
    "Q",
    "D",
    "iterations",
    "residual",
    "depleted_fraction",
    "converged",
    "delay_defined",
    "saturated",
    "baseline_depleted_fraction",
    "cfl",
    "stationarity_gap",
]

SWEEP_COLUMNS = ["p_s", "pi_a", "T_h", "D", "Q", "E_Nt", "converged"]

VALIDATE_COLUMNS = ["check", "analytic", "mc_mean", "mc_se", "pass", "status"]


def write_csv(df: pd.DataFrame, path: Path) -> Path:
    """Locale-independent, byte-stable CSV"""
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format="%.10g", lineterminator="\n", na_rep="NaN", encoding="utf-8")
    logger.debug("report.written", path=str(path), rows=len(df))
    return path


def field_frame(f: Field, g: Grid) -> pd.DataFrame:
    """Long format (t, e, value), time-major"""
    tt, ee = np.meshgrid(g.times, g.energies, indexing="ij")
    return pd.DataFrame({"t": tt.ravel(), "e": ee.ravel(), "value": f.values.ravel()})


def cross_section_frame(f: Field, g: Grid, levels: Optional[Sequence[float]] = None) -> pd.DataFrame:
    """Time traces of a field at fixed energy levels, snapped to the grid"""
    if levels is None:
        levels = [g.e_max * q for q in (0.25, 0.5, 0.75)]
    frames = []
    for level in levels:
        i = int(g.energy_index(level))
        frames.append(pd.DataFrame({"t": g.times, "e": float(g.energy_of(i)), "value": f.values[:, i]}))
    return pd.concat(frames, ignore_index=True)


def summary_frame(row: Dict[str, Any]) -> pd.DataFrame:
    return pd.DataFrame([row], columns=SUMMARY_COLUMNS)


def sweep_frame(axis: str, rows: List[Dict[str, Any]]) -> pd.DataFrame:
    return pd.DataFrame(rows, columns=[axis] + SWEEP_COLUMNS)


def validate_frame(checks: Iterable[OracleCheck]) -> pd.DataFrame:
    return pd.DataFrame([c.as_row() for c in checks], columns=VALIDATE_COLUMNS)


def _fmt(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "yes" if value else "no"
    if isinstance(value, (float, np.floating)):
        return f"{value:.6g}"
    return str(value)


def render_table(title: str, df: pd.DataFrame, console: Optional[Console] = None) -> None:
    console = console or Console()
    table = Table(title=title)
    for column in df.columns:
        table.add_column(str(column))
    for record in df.itertuples(index=False):
        table.add_row(*(_fmt(v) for v in record))
    console.print(table)
