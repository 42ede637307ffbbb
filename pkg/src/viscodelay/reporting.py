"""Flat-file outputs: CSV at 17 significant digits, JSON with round-trip floats."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .dynamics import ENERGY_COLUMNS

FLOAT_FMT = "%.17g"


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n")


def write_trajectory_csv(path, trajectory) -> None:
    cols = [trajectory.times] + [trajectory.energy[c] for c in ENERGY_COLUMNS]
    np.savetxt(
        path,
        np.column_stack(cols),
        fmt=FLOAT_FMT,
        delimiter=",",
        header=",".join(("t",) + ENERGY_COLUMNS),
        comments="",
    )


def write_snapshot_csv(path, trajectory) -> None:
    """Per-mode snapshots: t, u_1..u_K, v_1..v_K."""
    K = trajectory.snapshot_u.shape[1]
    header = ["t"] + [f"u_{k}" for k in range(1, K + 1)] + [f"v_{k}" for k in range(1, K + 1)]
    data = np.column_stack([trajectory.snapshot_times, trajectory.snapshot_u, trajectory.snapshot_v])
    np.savetxt(path, data, fmt=FLOAT_FMT, delimiter=",", header=",".join(header), comments="")


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % v
    return "" if v is None else str(v)


def write_rows_csv(path, rows: list[dict], columns: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row.get(c)) for c in columns])


def read_csv_columns(path) -> dict[str, np.ndarray]:
    data = np.genfromtxt(path, delimiter=",", names=True)
    return {name: np.atleast_1d(data[name]) for name in data.dtype.names}
