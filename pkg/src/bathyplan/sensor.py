"""Multibeam echosounder simulation and per-beam input uncertainty."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from .terrain import TerrainGrid, depth_at_clamped
from .vehicle import Pose, PoseBelief, psd_sqrt

BISECTION_ITERS = 50
FOOTPRINT_TOL = 1e-3


@dataclass
class SensorConfig:
    opening_angle: float = math.radians(90.0)
    n_beams: int = 64
    ping_rate: float = 20.0
    noise_Q: np.ndarray = field(default_factory=lambda: np.diag([0.0025, 0.0025, 0.01]))
    ui_floor: float = 1e-4

    def __post_init__(self):
        if not 0 < self.opening_angle < math.pi:
            raise ValueError("opening_angle must lie in (0, pi)")
        if self.n_beams < 1:
            raise ValueError("n_beams must be >= 1")
        if self.ping_rate <= 0:
            raise ValueError("ping_rate must be positive")
        self.noise_Q = np.asarray(self.noise_Q, dtype=float).reshape(3, 3)
        if np.any(np.diag(self.noise_Q) < 0):
            raise ValueError("noise_Q diagonal must be non-negative")
        if self.ui_floor < 0:
            raise ValueError("ui_floor must be non-negative")

    def beam_angles(self) -> np.ndarray:
        if self.n_beams == 1:
            return np.zeros(1)
        half = self.opening_angle / 2.0
        return np.linspace(-half, half, self.n_beams)


class Beam(NamedTuple):
    pos: np.ndarray    # (x, y, z) with z = -depth
    omega: np.ndarray  # 2x2 horizontal input covariance


@dataclass(frozen=True)
class Ping:
    t: float
    true_pose: Pose
    believed: PoseBelief
    positions: np.ndarray  # (n, 3)
    omegas: np.ndarray     # (n, 2, 2)
    beam_idx: np.ndarray   # fan index of each surviving beam

    @property
    def beams(self) -> list[Beam]:
        return [Beam(p, o) for p, o in zip(self.positions, self.omegas)]

    def __len__(self) -> int:
        return len(self.positions)


def swath_width(depth: float, opening_angle: float) -> float:
    """Flat-bottom swath width."""
    if not 0 <= opening_angle < math.pi:
        raise ValueError("opening_angle must lie in [0, pi)")
    if depth <= 0:
        raise ValueError("depth must be positive")
    return 2.0 * depth * math.tan(opening_angle / 2.0)


def _rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def beam_ui_cov(believed: PoseBelief, beam_offset, cfg: SensorConfig) -> np.ndarray:
    """First-order projection of pose uncertainty onto a beam footprint.

    A heading error ``dtheta`` swings an across-track lever arm of length
    ``r`` by ``r * dtheta`` in the along-track direction.
    """
    offs = np.atleast_2d(np.asarray(beam_offset, dtype=float))
    P = believed.cov[:2, :2]
    var_th = max(float(believed.cov[2, 2]), 0.0)
    R = _rotation(believed.mean.theta)
    along = R[:, 0]
    lever2 = np.sum(offs**2, axis=1)
    om = (P[None, :, :] + var_th * lever2[:, None, None] * np.outer(along, along)[None]
          + cfg.ui_floor * np.eye(2)[None])
    om = 0.5 * (om + np.swapaxes(om, 1, 2))
    return om[0] if np.ndim(beam_offset) == 1 else om


def _footprints(origin_xy: np.ndarray, across: np.ndarray, tan_a: np.ndarray,
                grid: TerrainGrid) -> np.ndarray:
    """Signed across-track distance where each beam meets the height field.

    Solves ``g(rho) = rho - tan|a| * depth(p + rho * across) = 0`` with a
    bracketed Illinois (modified regula falsi) iteration, which keeps the
    bisection bracket guarantee while converging superlinearly.
    """
    sign = np.sign(tan_a)
    ta = np.abs(tan_a)

    def g(rho):
        pts = origin_xy[None, :] + (sign * rho)[:, None] * across[None, :]
        return rho - ta * depth_at_clamped(grid, pts[:, 0], pts[:, 1])

    lo = np.zeros_like(ta)
    hi = ta * float(grid.depth.max()) + 1.0
    glo, ghi = g(lo), g(hi)
    side = np.zeros(len(ta), dtype=int)
    for _ in range(BISECTION_ITERS):
        width = hi - lo
        if np.all(width < FOOTPRINT_TOL * 1e-3):
            break
        denom = ghi - glo
        mid = np.where(denom > 0, lo - glo * width / np.where(denom > 0, denom, 1.0), 0.5 * (lo + hi))
        mid = np.clip(mid, lo, hi)
        gm = g(mid)
        pos = gm > 0
        # Illinois: halve the stale endpoint's value when the same side is kept twice
        hi, ghi_new = np.where(pos, mid, hi), np.where(pos, gm, ghi)
        lo, glo_new = np.where(pos, lo, mid), np.where(pos, glo, gm)
        glo = np.where(pos & (side == 1), 0.5 * glo_new, glo_new)
        ghi = np.where(~pos & (side == -1), 0.5 * ghi_new, ghi_new)
        side = np.where(pos, 1, -1)
        done = np.abs(gm) < 1e-12
        lo = np.where(done, mid, lo)
        hi = np.where(done, mid, hi)
    return sign * 0.5 * (lo + hi)


def simulate_ping(true_pose: Pose, believed: PoseBelief, grid: TerrainGrid,
                  cfg: SensorConfig, rng: np.random.Generator, t: float = 0.0) -> Ping:
    if not grid.contains(true_pose.x, true_pose.y):
        raise ValueError("vehicle outside the terrain grid")
    angles = cfg.beam_angles()
    tan_a = np.tan(angles)
    across_true = _rotation(true_pose.theta)[:, 1]
    rho = _footprints(np.array([true_pose.x, true_pose.y]), across_true, tan_a, grid)
    foot = np.array([true_pose.x, true_pose.y])[None, :] + rho[:, None] * across_true[None, :]
    keep = grid.contains(foot[:, 0], foot[:, 1])

    z_true = -depth_at_clamped(grid, foot[:, 0], foot[:, 1])
    across_bel = _rotation(believed.mean.theta)[:, 1]
    offsets = rho[:, None] * across_bel[None, :]
    pos = np.column_stack([believed.mean.x + offsets[:, 0],
                           believed.mean.y + offsets[:, 1], z_true])
    if np.any(cfg.noise_Q):
        pos = pos + rng.standard_normal((len(pos), 3)) @ psd_sqrt(cfg.noise_Q).T
    omegas = beam_ui_cov(believed, offsets, cfg)
    idx = np.flatnonzero(keep)
    return Ping(t=t, true_pose=true_pose, believed=believed, positions=pos[keep],
                omegas=omegas[keep], beam_idx=idx)


def write_ping_log(pings: Iterable[Ping], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "beam_idx", "x", "y", "z", "om_xx", "om_xy", "om_yy"])
        for ping in pings:
            for k, p, om in zip(ping.beam_idx, ping.positions, ping.omegas):
                w.writerow([repr(ping.t), int(k), repr(p[0]), repr(p[1]), repr(p[2]),
                            repr(om[0, 0]), repr(om[0, 1]), repr(om[1, 1])])
