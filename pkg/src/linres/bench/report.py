"""CSV and JSON writers for benchmark results."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, List, Sequence

from .grid import GridResult
from .memory import ConnectivityRow, MCCurve
from .timing import TimingRow

GRID_COLUMNS = ("task", "method", "rmse_mean", "rmse_std", "best_lr", "best_rho", "best_scale",
                "best_alpha", "wall_ms")
MC_COLUMNS = ("N", "method", "delay", "mc")
TIMING_COLUMNS = ("method", "units", "phase", "median_s")


def _num(x) -> str:
    return repr(float(x))


def grid_rows(results: Iterable[GridResult]) -> List[dict]:
    rows = []
    for r in results:
        best = r.best
        rows.append({"task": r.task, "method": r.method, "rmse_mean": r.rmse_mean,
                     "rmse_std": r.rmse_std, "best_lr": best.leak_rate,
                     "best_rho": best.spectral_radius, "best_scale": best.input_scaling,
                     "best_alpha": best.alpha, "wall_ms": r.wall_ms})
    return rows


def write_grid_csv(results: Sequence[GridResult], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(GRID_COLUMNS)
        for row in grid_rows(results):
            w.writerow([row["task"], row["method"]] +
                       [_num(row[c]) for c in GRID_COLUMNS[2:-1]] + [f"{row['wall_ms']:.1f}"])


def grid_json(results: Sequence[GridResult]) -> dict:
    out = []
    for r, row in zip(results, grid_rows(results)):
        row = dict(row)
        row["phases_ms"] = {k: 1e3 * v for k, v in r.phases.items()}
        row["per_seed"] = [{"seed": s.seed, "val_rmse": s.val_rmse, "test_rmse": s.test_rmse,
                            "lr": s.cell.leak_rate, "rho": s.cell.spectral_radius,
                            "scale": s.cell.input_scaling, "alpha": s.cell.alpha}
                           for s in r.seeds]
        out.append(row)
    return {"schema": "v1", "rows": out}


def write_grid_json(results: Sequence[GridResult], path) -> None:
    Path(path).write_text(json.dumps(grid_json(results), indent=2, allow_nan=True) + "\n")


def write_mc_csv(curves: Sequence[MCCurve], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MC_COLUMNS)
        for c in curves:
            for k, v in zip(c.delays, c.mc):
                w.writerow([c.units, c.method, int(k), _num(v)])


def write_timing_csv(rows: Sequence[TimingRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TIMING_COLUMNS)
        for r in rows:
            w.writerow([r.method, r.units, r.phase, _num(r.median_s)])


def write_connectivity_csv(N: int, delay: int, rows: Sequence[ConnectivityRow], path,
                           methods=("normal", "diag")) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["N", "delay", "connectivity"] + [f"mc_{m}" for m in methods]
                   + ["difference", "errors"])
        for r in rows:
            diff = r.difference
            w.writerow([N, delay, _num(r.connectivity)]
                       + [_num(r.mc.get(m, math.nan)) for m in methods]
                       + [_num(diff), " | ".join(f"{k}: {v}" for k, v in r.errors.items())])
