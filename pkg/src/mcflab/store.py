"""On-disk artifacts: snapshot and monitor CSVs, JSON reports and the run manifest."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from pathlib import Path

import numpy as np

from .flow import MONITOR_COLUMNS, Trajectory
from .mesh import RadialGrid, TensorGrid2D

OUTPUT_ROOT_ENV = "MCFLAB_OUTPUT_ROOT"


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "mcflab_output"))


def _num(x: float) -> str:
    # repr is the shortest string that round-trips the double
    return repr(float(x))


def snapshot_rows(traj_or_fields):
    snaps = traj_or_fields.snapshots if isinstance(traj_or_fields, Trajectory) else traj_or_fields
    grid = snaps[0].grid
    if isinstance(grid, TensorGrid2D):
        header = ["t", "x", "y", "u"]
    elif isinstance(grid, RadialGrid):
        header = ["t", "r", "u"]
    else:
        header = ["t", "x", "u"]
    yield header
    for s in snaps:
        t = _num(s.time)
        if isinstance(s.grid, TensorGrid2D):
            X, Y = s.grid.mesh()
            for x, y, u in zip(X.ravel(), Y.ravel(), s.values.ravel()):
                yield [t, _num(x), _num(y), _num(u)]
        else:
            for x, u in zip(s.grid.nodes, s.values):
                yield [t, _num(x), _num(u)]


def write_csv(path: Path, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in rows:
            w.writerow(row)
    return path


def write_snapshots(path: Path, fields) -> Path:
    return write_csv(path, snapshot_rows(fields))


def write_monitor(path: Path, traj: Trajectory) -> Path:
    rows = [list(MONITOR_COLUMNS)] + [[_num(v) for v in row] for row in traj.monitor]
    return write_csv(path, rows)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def inventory(root: Path, exclude: tuple[str, ...] = ("manifest.json",)) -> list[dict]:
    files = sorted(p for p in root.rglob("*") if p.is_file() and p.name not in exclude)
    return [{"path": p.relative_to(root).as_posix(), "sha256": sha256_file(p), "bytes": p.stat().st_size} for p in files]
