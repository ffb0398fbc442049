"""CSV, VTK and JSON writers with fixed, byte-stable formats."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping

import numpy as np

CSV_COLUMNS = ("n", "t", "norm_Ainv", "norm_I", "norm_A", "eps_1", "eps_2",
               "delta_1", "delta_2", "energy", "cg_iters")
INT_COLUMNS = {"n", "cg_iters"}


def _cell(key: str, value) -> str:
    if value is None:
        return ""
    if key in INT_COLUMNS:
        return str(int(value))
    return "%.17g" % float(value)


def format_row(row: Mapping) -> str:
    unknown = set(row) - set(CSV_COLUMNS)
    if unknown:
        raise KeyError(f"unknown CSV columns {sorted(unknown)}")
    return ",".join(_cell(k, row.get(k)) for k in CSV_COLUMNS)


class CsvWriter:
    """Streams rows so that a failing run still leaves the rows computed so far."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._fh = self.path.open("w", newline="\n")
        self._fh.write(",".join(CSV_COLUMNS) + "\n")

    def write(self, row: Mapping) -> None:
        self._fh.write(format_row(row) + "\n")

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_csv(path: str | Path) -> list[dict]:
    """Parse a file written by CsvWriter; empty cells become None."""
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        row = {}
        for key, cell in zip(header, line.split(",")):
            row[key] = None if cell == "" else (int(cell) if key in INT_COLUMNS else float(cell))
        rows.append(row)
    return rows


def write_vtk(path: str | Path, m: int, fields: Mapping[str, np.ndarray], title: str = "fields") -> None:
    """Legacy ASCII VTK on the (m+1) x (m+1) lattice of the unit square.

    Node k = j (m+1) + i sits at (i/m, j/m), which is the x-fastest point
    ordering STRUCTURED_POINTS expects.
    """
    n = (m + 1) ** 2
    h = 1.0 / m
    lines = [
        "# vtk DataFile Version 3.0",
        title.replace("\n", " ")[:255],
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {m + 1} {m + 1} 1",
        "ORIGIN 0 0 0",
        "SPACING %.17g %.17g 1" % (h, h),
        f"POINT_DATA {n}",
    ]
    for name, values in fields.items():
        values = np.asarray(values, dtype=float)
        if values.shape != (n,):
            raise ValueError(f"field {name!r} has shape {values.shape}, expected ({n},)")
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += ["%.17g" % v for v in values]
    Path(path).write_text("\n".join(lines) + "\n")


def read_vtk_scalars(path: str | Path) -> dict[str, np.ndarray]:
    lines = Path(path).read_text().splitlines()
    n = next(int(l.split()[1]) for l in lines if l.startswith("POINT_DATA"))
    out = {}
    for i, line in enumerate(lines):
        if line.startswith("SCALARS"):
            name = line.split()[1]
            out[name] = np.array([float(v) for v in lines[i + 2:i + 2 + n]])
    return out


def write_json(path: str | Path, payload: Mapping) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=True) + "\n")

