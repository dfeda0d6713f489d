"""Map consistency metrics and RMSE-versus-distance curves."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

NOT_REACHED = "not reached"


@dataclass(frozen=True)
class MetricSample:
    distance_travelled: float
    t: float
    rmse: float
    n_beams: int = 0
    tag: str = ""


def consistency_rmse(gt: np.ndarray, model) -> float:
    """Root-mean-square difference between the posterior mean and GT heights.

    ``gt`` rows are ``(x, y, z)`` with ``z`` in the model's convention.
    """
    gt = np.asarray(gt, dtype=float)
    if gt.ndim != 2 or gt.shape[1] != 3 or len(gt) == 0:
        raise ValueError("gt must be a non-empty (n, 3) array")
    mu, _ = model.predict(gt[:, :2])
    return float(np.sqrt(np.mean((mu - gt[:, 2]) ** 2)))


def rmse_curve(checkpoints: Sequence[tuple], gt: np.ndarray) -> list[MetricSample]:
    """One sample per checkpoint ``(distance, t, model[, n_beams[, tag]])``."""
    out: list[MetricSample] = []
    last = -math.inf
    for cp in checkpoints:
        dist, t, model = cp[0], cp[1], cp[2]
        if dist < last:
            raise ValueError("checkpoints must be ordered by distance")
        last = dist
        n = int(cp[3]) if len(cp) > 3 else 0
        tag = str(cp[4]) if len(cp) > 4 else ""
        out.append(MetricSample(float(dist), float(t), consistency_rmse(gt, model), n, tag))
    return out


def first_reach(curve: Sequence[MetricSample], parity_rmse: float) -> float | None:
    """Distance of the first sample at or below ``parity_rmse``."""
    for s in curve:
        if s.rmse <= parity_rmse:
            return s.distance_travelled
    return None


def improvement_at_parity(curve_a: Sequence[MetricSample], curve_b: Sequence[MetricSample],
                          parity_rmse: float) -> Union[float, str]:
    """``1 - d_a / d_b`` where ``d`` is the distance first reaching ``parity_rmse``."""
    da = first_reach(curve_a, parity_rmse)
    db = first_reach(curve_b, parity_rmse)
    if da is None or db is None:
        return NOT_REACHED
    if db <= 0:
        return 0.0 if da <= 0 else -math.inf
    return 1.0 - da / db


def write_metrics_csv(rows: Iterable[dict], path) -> None:
    """Metrics CSV with columns ``run_id,method,seed,distance_m,t_s,rmse_m``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run_id", "method", "seed", "distance_m", "t_s", "rmse_m"])
        for r in rows:
            w.writerow([r["run_id"], r["method"], int(r["seed"]), repr(float(r["distance_m"])),
                        repr(float(r["t_s"])), repr(float(r["rmse_m"]))])


def curve_rows(curve: Sequence[MetricSample], run_id: str, method: str, seed: int) -> list[dict]:
    return [{"run_id": run_id, "method": method, "seed": seed, "distance_m": s.distance_travelled,
             "t_s": s.t, "rmse_m": s.rmse} for s in curve]


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["seed"] = int(r["seed"])
        for k in ("distance_m", "t_s", "rmse_m"):
            r[k] = float(r[k])
    return rows


def summarize(curves: Sequence[Sequence[MetricSample]]) -> list[dict]:
    """Pointwise median/min/max RMSE across runs sharing a checkpoint grid.

    Runs are aligned by checkpoint index and truncated to the shortest.
    """
    if not curves:
        return []
    n = min(len(c) for c in curves)
    out = []
    for i in range(n):
        vals = np.array([c[i].rmse for c in curves])
        dist = float(np.median([c[i].distance_travelled for c in curves]))
        out.append({"distance_m": dist, "median": float(np.median(vals)),
                    "min": float(vals.min()), "max": float(vals.max()), "n_runs": len(curves)})
    return out
