"""Dataset CSV, region CSV, and report JSON serialization.

All writers are deterministic: rerunning the same configuration with the
same seeds produces byte-identical files. Floats are rendered with
shortest-roundtrip repr, JSON keys are sorted, and CSV rows follow the
lexicographic node order of the grid.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from fractions import Fraction
from pathlib import Path

import numpy as np

from .arx import Dataset
from .errors import ConfigError
from .regions import Ellipsoid, IndicatorGrid

__all__ = [
    "jsonable",
    "read_dataset_csv",
    "write_dataset_csv",
    "write_region_csv",
    "write_ellipsoid_json",
    "write_report_json",
]


def jsonable(obj):
    """Recursively convert reports to JSON-serializable structures.

    Exact rationals become {"num": ..., "den": ...}; arrays become lists.
    """
    if isinstance(obj, Fraction):
        return {"num": obj.numerator, "den": obj.denominator}
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_report_json(path, payload: dict) -> None:
    text = json.dumps(jsonable(payload), indent=2, sort_keys=True)
    Path(path).write_text(text + "\n")


def write_dataset_csv(path, ds: Dataset) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "u", "y"])
        for t in range(ds.n):
            writer.writerow([t + 1, repr(float(ds.u[t])), repr(float(ds.y[t]))])


def read_dataset_csv(path, y_init=None, u_init=None) -> Dataset:
    """Read a `t,u,y` file; initial conditions come from configuration, not
    the file, and default to zero (orders (len(y_init), len(u_init)))."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["t", "u", "y"]:
            raise ConfigError(f"{path}: expected header 't,u,y', got {header}")
        for row in reader:
            if not row:
                continue
            if len(row) != 3:
                raise ConfigError(f"{path}: malformed row {row}")
            rows.append((int(row[0]), float(row[1]), float(row[2])))
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    ts = [r[0] for r in rows]
    if ts != list(range(1, len(rows) + 1)):
        raise ConfigError(f"{path}: t column must run 1..n")
    u = np.array([r[1] for r in rows])
    y = np.array([r[2] for r in rows])
    y_init = np.zeros(0) if y_init is None else np.asarray(y_init, dtype=float)
    u_init = np.zeros(1) if u_init is None else np.asarray(u_init, dtype=float)
    return Dataset(u=u, y=y, y_init=y_init, u_init=u_init)


def write_region_csv(path, grid: IndicatorGrid) -> None:
    """One row per node: theta_1..theta_d, rank, included (0/1), in
    lexicographic node order."""
    d = grid.spec.dim
    nodes = grid.spec.nodes()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"theta_{k + 1}" for k in range(d)] + ["rank", "included"])
        for j in range(nodes.shape[0]):
            writer.writerow(
                [repr(float(v)) for v in nodes[j]]
                + [int(grid.ranks[j]), int(grid.verdicts[j])]
            )


def write_ellipsoid_json(path, ellipsoid: Ellipsoid) -> None:
    payload = {
        "center": ellipsoid.center,
        "shape_row_major": ellipsoid.shape.reshape(-1),
        "radius_sq": ellipsoid.radius_sq,
    }
    write_report_json(path, payload)
