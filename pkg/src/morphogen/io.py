"""CSV emission for series, fields and small tables.

All floats are written with 17 significant digits so a read-back reproduces
the doubles exactly. Line endings are ``\\n``.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .mesh import Grid

SERIES_COLUMNS = ("t", "Lambda", "D_Lambda", "int_D_Lambda", "l2_z1", "l2_z2", "lp_z1",
                  "lp_z2", "w1p_z1", "w1p_z2", "w2p_z1", "envelope_KLW")
COORD_NAMES = ("x", "y")


def fmt(x) -> str:
    return "%.17g" % x


def _write_rows(path, header: Sequence[str], rows) -> Path:
    path = Path(path)
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def write_table_csv(path, columns: Mapping[str, Sequence]) -> Path:
    """Write equal-length columns; floats use 17 digits, other values ``str``."""
    names = list(columns)
    cols = [list(columns[n]) for n in names]
    n = {len(c) for c in cols}
    if len(n) > 1:
        raise ValueError(f"columns have different lengths: {sorted(n)}")
    rows = ([fmt(v) if isinstance(v, (float, np.floating)) else str(v) for v in row]
            for row in zip(*cols))
    return _write_rows(path, names, rows)


def write_series_csv(path, series) -> Path:
    """Write a :class:`~morphogen.lyapunov.LyapunovSeries` with the frozen column order."""
    cols = series.columns()
    missing = [c for c in SERIES_COLUMNS if c not in cols]
    if missing:
        raise ValueError(f"series lacks columns {missing}")
    data = np.column_stack([np.asarray(cols[c], dtype=float) for c in SERIES_COLUMNS])
    return _write_rows(path, SERIES_COLUMNS, ([fmt(v) for v in row] for row in data))


def write_field_csv(path, grid: Grid, field) -> Path:
    """Write node coordinates followed by the field value, one unknown per row."""
    field = grid.check_field(field)
    coords = grid.coordinates
    header = list(COORD_NAMES[: grid.dimension]) + ["value"]
    rows = ([fmt(c) for c in xy] + [fmt(v)] for xy, v in zip(coords, field))
    return _write_rows(path, header, rows)


def read_field_csv(path, grid: Grid | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Read a field CSV; returns ``(coordinates, values)``.

    With ``grid`` given, the coordinates must match the grid's unknowns.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(x) for x in row] for row in reader if row]
    if not header or header[-1] != "value":
        raise ValueError(f"{path}: last column must be 'value', header is {header}")
    data = np.asarray(rows, dtype=float).reshape(len(rows), len(header))
    coords, values = data[:, :-1], data[:, -1]
    if grid is not None:
        if coords.shape != grid.coordinates.shape or not np.allclose(
                coords, grid.coordinates, rtol=0, atol=1e-12 * max(grid.extents)):
            raise ValueError(f"{path}: node coordinates do not match the grid")
    return coords, values


def read_table_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [row for row in reader if row]
    out = {}
    for j, name in enumerate(header):
        col = [r[j] for r in rows]
        try:
            out[name] = np.array([float(c) for c in col])
        except ValueError:
            out[name] = np.array(col)
    return out
