"""Comparison baselines: lawn-mower coverage and myopic single-candidate BO."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .planner import PlannerConfig, PlanResult, SimDeadline, _myopic_stage, random_plan
from .sensor import SensorConfig, swath_width
from .vehicle import DubinsPath, Pose, PoseBelief, dubins_shortest, straight_path

CORNERS = ("sw", "se", "nw", "ne")


@dataclass(frozen=True)
class LawnmowerSpec:
    area: tuple[float, float, float, float]
    track_spacing: float
    swath: float
    entry_corner: str = "sw"
    turn_radius: float = 10.0

    def __post_init__(self):
        xmin, ymin, xmax, ymax = self.area
        if not (xmax > xmin and ymax > ymin):
            raise ValueError("area must have positive width and height")
        if self.track_spacing <= 0:
            raise ValueError("track_spacing must be positive")
        if self.track_spacing > self.swath + 1e-9:
            raise ValueError("track_spacing exceeds the swath width (coverage gap)")
        if self.entry_corner not in CORNERS:
            raise ValueError(f"entry_corner must be one of {CORNERS}")
        if self.turn_radius <= 0:
            raise ValueError("turn_radius must be positive")


def track_offsets(width: float, spacing: float, swath: float) -> np.ndarray:
    """Across-track positions relative to the area's lower edge."""
    if swath >= width:
        return np.array([width / 2.0])
    n = int(math.ceil(width / spacing - 1e-9))
    return width / 2.0 + (np.arange(n) - (n - 1) / 2.0) * spacing


def lawnmower_path(area, nominal_depth: float, sensor_cfg: SensorConfig,
                   overlap_fraction: float = 0.10, turn_radius: float = 10.0,
                   entry_corner: str = "sw") -> list[DubinsPath]:
    """Boustrophedon legs (tracks and Dubins turns) along the area's long axis.

    Turns tighter than the vehicle allows bulge outside the area.
    """
    if not 0 <= overlap_fraction < 1:
        raise ValueError("overlap_fraction must lie in [0, 1)")
    w = swath_width(nominal_depth, sensor_cfg.opening_angle)
    spec = LawnmowerSpec(tuple(map(float, area)), (1 - overlap_fraction) * w, w,
                         entry_corner, turn_radius)
    xmin, ymin, xmax, ymax = spec.area
    along_x = (xmax - xmin) >= (ymax - ymin)
    length = (xmax - xmin) if along_x else (ymax - ymin)
    width = (ymax - ymin) if along_x else (xmax - xmin)
    offs = track_offsets(width, spec.track_spacing, w)
    flip_across = entry_corner in (("nw", "ne") if along_x else ("se", "ne"))
    flip_along = entry_corner in (("se", "ne") if along_x else ("nw", "ne"))
    if flip_across:
        offs = offs[::-1]

    def to_world(a: float, c: float) -> np.ndarray:
        return np.array([xmin + a, ymin + c]) if along_x else np.array([xmin + c, ymin + a])

    base_heading = 0.0 if along_x else math.pi / 2
    legs: list[DubinsPath] = []
    forward = not flip_along
    prev_end: Pose | None = None
    for c in offs:
        p0 = to_world(0.0 if forward else length, c)
        heading = base_heading if forward else base_heading + math.pi
        start = Pose.make(p0[0], p0[1], heading)
        if prev_end is not None:
            legs.append(dubins_shortest(prev_end, start, turn_radius))
        track = straight_path(start, length, turn_radius)
        legs.append(track)
        prev_end = track.end
        forward = not forward
    return legs


def pattern_length(legs: list[DubinsPath]) -> float:
    return float(sum(leg.length for leg in legs))


def coverage_fraction(legs: list[DubinsPath], area, swath: float, resolution: float = 1.0) -> float:
    """Fraction of raster cells (centres) inside the union of straight-track swaths."""
    xmin, ymin, xmax, ymax = area
    nx = max(1, int(math.ceil((xmax - xmin) / resolution)))
    ny = max(1, int(math.ceil((ymax - ymin) / resolution)))
    xs = xmin + (np.arange(nx) + 0.5) * (xmax - xmin) / nx
    ys = ymin + (np.arange(ny) + 0.5) * (ymax - ymin) / ny
    xx, yy = np.meshgrid(xs, ys)
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    covered = np.zeros(len(pts), dtype=bool)
    tol = 1e-9
    for leg in legs:
        if any(k != 0 for k, p in zip(leg.curvatures(), leg.segment_params) if p > 0):
            continue  # turns are not counted as coverage
        s = leg.start
        d = np.array([math.cos(s.theta), math.sin(s.theta)])
        rel = pts - np.array([s.x, s.y])
        along = rel @ d
        across = rel @ np.array([-d[1], d[0]])
        covered |= (along >= -tol) & (along <= leg.length + tol) & (np.abs(across) <= swath / 2 + tol)
    return float(covered.mean())


def myopic_plan(model, belief: PoseBelief, cfg: PlannerConfig, rng: np.random.Generator,
                deadline=None) -> PlanResult:
    """Single-candidate UCB viewpoint plus heading BO; random viewpoint on failure."""
    deadline = SimDeadline(math.inf) if deadline is None else deadline
    deadline.charge(cfg.min_runtime)
    _, myopic_rng, random_rng = rng.spawn(3)
    result = _myopic_stage(model, belief, cfg, myopic_rng, deadline)
    if result is None:
        result = random_plan(belief, cfg, random_rng)
    return result
