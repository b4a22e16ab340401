# tests/unit/test_reporting.py

import numpy as np
import pandas as pd
from rich.console import Console

from src.models.fields import MeanField
from src.reporting import (
    SUMMARY_COLUMNS,
    cross_section_frame,
    field_frame,
    render_table,
    summary_frame,
    sweep_frame,
    write_csv,
)


def test_field_frame_is_time_major(small_grid):
    values = np.arange(np.prod(small_grid.shape), dtype=float).reshape(small_grid.shape)
    df = field_frame(MeanField(values), small_grid)
    assert list(df.columns) == ["t", "e", "value"]
    assert len(df) == values.size
    assert df["value"].tolist() == values.ravel().tolist()
    assert df["t"].iloc[small_grid.n_energy + 1] == small_grid.dt


def test_cross_section_snaps_to_grid(small_grid):
    values = np.tile(np.arange(small_grid.n_energy + 1, dtype=float), (small_grid.n_time + 1, 1))
    df = cross_section_frame(MeanField(values), small_grid, levels=[0.5 * small_grid.e_max])
    assert len(df) == small_grid.n_time + 1
    assert set(df["value"]) == {3.0}


def test_default_cross_sections(small_grid):
    df = cross_section_frame(MeanField(np.zeros(small_grid.shape)), small_grid)
    assert len(df) == 3 * (small_grid.n_time + 1)


def test_summary_has_fixed_columns():
    df = summary_frame({"p_s": 0.5, "converged": True})
    assert list(df.columns) == SUMMARY_COLUMNS
    assert df["p_s"].iloc[0] == 0.5


def test_sweep_rows_keep_order():
    rows = [{"J": j, "p_s": 0.1 * j} for j in (7, 1, 3)]
    df = sweep_frame("J", rows)
    assert df["J"].tolist() == [7, 1, 3]
    assert df.columns[0] == "J"


def test_csv_is_byte_stable(tmp_path):
    df = pd.DataFrame({"x": [0.1, 1 / 3, float("nan")], "flag": [True, False, True]})
    a = write_csv(df, tmp_path / "a" / "out.csv").read_bytes()
    b = write_csv(df, tmp_path / "b" / "out.csv").read_bytes()
    assert a == b
    assert a == b"x,flag\n0.1,True\n0.3333333333,False\nNaN,True\n"


def test_render_table(small_grid):
    console = Console(record=True, width=200)
    render_table("Summary", summary_frame({"p_s": 0.25, "converged": True}), console)
    text = console.export_text()
    assert "0.25" in text
    assert "yes" in text
