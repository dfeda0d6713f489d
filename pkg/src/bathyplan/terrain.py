"""Ground-truth seabed grids: synthesis, file I/O and bilinear queries.

Depths are stored positive-down in metres. Node ``(r, c)`` sits at
``(origin_x + c * cell_size, origin_y + r * cell_size)``, so rows run
south to north and columns west to east.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

GRID_MAGIC = "BGRID v1"


class GridFormatError(ValueError):
    """Raised when a grid file cannot be parsed."""


@dataclass(frozen=True)
class TerrainGrid:
    origin: tuple[float, float]
    cell_size: float
    depth: np.ndarray = field(repr=False)

    def __post_init__(self):
        depth = np.array(self.depth, dtype=float)
        if depth.ndim != 2 or depth.shape[0] < 2 or depth.shape[1] < 2:
            raise ValueError(f"depth must be at least 2x2, got shape {depth.shape}")
        if not self.cell_size > 0:
            raise ValueError("cell_size must be positive")
        if not np.all(np.isfinite(depth)):
            raise ValueError("depth values must be finite")
        if np.any(depth <= 0):
            r, c = np.argwhere(depth <= 0)[0]
            raise ValueError(f"non-positive depth {depth[r, c]} at node ({r}, {c})")
        depth.flags.writeable = False
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "cell_size", float(self.cell_size))

    @property
    def n_rows(self) -> int:
        return self.depth.shape[0]

    @property
    def n_cols(self) -> int:
        return self.depth.shape[1]

    @property
    def extent(self) -> tuple[float, float, float, float]:
        """Node hull as ``(xmin, ymin, xmax, ymax)``; the queryable region."""
        x0, y0 = self.origin
        return (x0, y0, x0 + (self.n_cols - 1) * self.cell_size,
                y0 + (self.n_rows - 1) * self.cell_size)

    @property
    def area_ha(self) -> float:
        # each node represents one cell of cell_size**2
        return self.n_rows * self.n_cols * self.cell_size**2 / 1e4

    def contains(self, x, y) -> np.ndarray:
        xmin, ymin, xmax, ymax = self.extent
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return (x >= xmin) & (x <= xmax) & (y >= ymin) & (y <= ymax)

    def node_xy(self, r: int, c: int) -> tuple[float, float]:
        return (self.origin[0] + c * self.cell_size, self.origin[1] + r * self.cell_size)

    def __eq__(self, other):
        if not isinstance(other, TerrainGrid):
            return NotImplemented
        return (self.origin == other.origin and self.cell_size == other.cell_size
                and self.depth.shape == other.depth.shape
                and bool(np.array_equal(self.depth, other.depth)))

    __hash__ = None


@dataclass
class FeatureSpec:
    """Recipe for a synthetic seabed: flat base, Gaussian bumps, value noise.

    Negative bump amplitudes make the seabed shallower (a mound).
    """

    base_depth: float = 20.0
    bumps: Sequence[tuple[tuple[float, float], float, float]] = ()
    noise_amplitude: float = 0.0
    noise_lengthscale: float = 10.0
    seed: int = 0

    def __post_init__(self):
        for center, amplitude, radius in self.bumps:
            if radius <= 0:
                raise ValueError(f"bump radius must be positive, got {radius}")
        if self.noise_amplitude < 0:
            raise ValueError("noise_amplitude must be non-negative")
        if self.noise_amplitude > 0 and self.noise_lengthscale <= 0:
            raise ValueError("noise_lengthscale must be positive")


def _lattice_values(ix: np.ndarray, iy: np.ndarray, seed: int) -> np.ndarray:
    """Uniform [-1, 1) value per integer lattice node from a 64-bit integer hash.

    Depends only on ``(seed, ix, iy)``, so any query set sees the same lattice.
    """
    with np.errstate(over="ignore"):
        h = (ix.astype(np.int64).view(np.uint64) * np.uint64(0x9E3779B97F4A7C15)
             ^ iy.astype(np.int64).view(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)
             ^ np.uint64((seed * 0x165667B19E3779F9) & 0xFFFFFFFFFFFFFFFF))
        # splitmix64 finaliser
        h ^= h >> np.uint64(30)
        h *= np.uint64(0xBF58476D1CE4E5B9)
        h ^= h >> np.uint64(27)
        h *= np.uint64(0x94D049BB133111EB)
        h ^= h >> np.uint64(31)
    return (h >> np.uint64(11)).astype(np.float64) * (2.0 / 2.0**53) - 1.0


def value_noise(x: np.ndarray, y: np.ndarray, lengthscale: float, seed: int,
                origin: tuple[float, float] = (0.0, 0.0)) -> np.ndarray:
    """Cosine-interpolated lattice value noise in [-1, 1].

    Lattice nodes are spaced ``lengthscale`` apart starting at ``origin``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    gx = (x - origin[0]) / lengthscale
    gy = (y - origin[1]) / lengthscale
    ix = np.floor(gx).astype(np.int64)
    iy = np.floor(gy).astype(np.int64)
    fx = gx - ix
    fy = gy - iy
    # cosine easing of the fractional offsets
    sx = (1.0 - np.cos(np.pi * fx)) / 2.0
    sy = (1.0 - np.cos(np.pi * fy)) / 2.0
    v00 = _lattice_values(ix, iy, seed)
    v01 = _lattice_values(ix + 1, iy, seed)
    v10 = _lattice_values(ix, iy + 1, seed)
    v11 = _lattice_values(ix + 1, iy + 1, seed)
    bottom = v00 * (1 - sx) + v01 * sx
    top = v10 * (1 - sx) + v11 * sx
    return bottom * (1 - sy) + top * sy


def feature_depth(spec: FeatureSpec, x, y, origin=(0.0, 0.0)) -> np.ndarray:
    """Evaluate the synthetic depth formula at arbitrary points."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    depth = np.full(np.broadcast(x, y).shape, float(spec.base_depth))
    for (cx, cy), amplitude, radius in spec.bumps:
        d2 = (x - cx) ** 2 + (y - cy) ** 2
        depth = depth + amplitude * np.exp(-d2 / (2.0 * radius**2))
    if spec.noise_amplitude > 0:
        depth = depth + spec.noise_amplitude * value_noise(
            x, y, spec.noise_lengthscale, spec.seed, origin)
    return depth


def synth_terrain(spec: FeatureSpec, origin=(0.0, 0.0), cell_size: float = 1.0,
                  n_rows: int = 100, n_cols: int = 100) -> TerrainGrid:
    if n_rows < 2 or n_cols < 2:
        raise ValueError("grid needs at least 2 rows and 2 columns")
    xs = origin[0] + cell_size * np.arange(n_cols)
    ys = origin[1] + cell_size * np.arange(n_rows)
    xx, yy = np.meshgrid(xs, ys)
    depth = feature_depth(spec, xx, yy, origin)
    if np.any(depth <= 0):
        raise ValueError(f"synthetic terrain reaches non-positive depth (min {depth.min():.3f} m)")
    return TerrainGrid(origin=origin, cell_size=cell_size, depth=depth)


def save_grid(grid: TerrainGrid, path) -> None:
    lines = [GRID_MAGIC,
             f"{grid.origin[0]!r} {grid.origin[1]!r} {grid.cell_size!r} {grid.n_rows} {grid.n_cols}"]
    for row in grid.depth:
        lines.append(" ".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_grid(path) -> TerrainGrid:
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != GRID_MAGIC:
        raise GridFormatError(f"{path}:1: expected header '{GRID_MAGIC}'")
    if len(text) < 2:
        raise GridFormatError(f"{path}:2: missing geometry line")
    parts = text[1].split()
    if len(parts) != 5:
        raise GridFormatError(f"{path}:2: expected 'origin_x origin_y cell_size n_rows n_cols'")
    try:
        ox, oy, cs = (float(p) for p in parts[:3])
        n_rows, n_cols = int(parts[3]), int(parts[4])
    except ValueError as exc:
        raise GridFormatError(f"{path}:2: {exc}") from None
    rows = [ln for ln in text[2:]]
    while rows and not rows[-1].strip():
        rows.pop()
    if len(rows) != n_rows:
        raise GridFormatError(
            f"{path}:{2 + len(rows)}: header declares {n_rows} rows, found {len(rows)}")
    depth = np.empty((n_rows, n_cols))
    for i, ln in enumerate(rows):
        lineno = i + 3
        vals = ln.split()
        if len(vals) != n_cols:
            raise GridFormatError(f"{path}:{lineno}: expected {n_cols} values, found {len(vals)}")
        try:
            depth[i] = [float(v) for v in vals]
        except ValueError as exc:
            raise GridFormatError(f"{path}:{lineno}: {exc}") from None
        if not np.all(np.isfinite(depth[i])):
            raise GridFormatError(f"{path}:{lineno}: non-finite depth")
    try:
        return TerrainGrid(origin=(ox, oy), cell_size=cs, depth=depth)
    except ValueError as exc:
        raise GridFormatError(f"{path}: {exc}") from None


def _snap(g: np.ndarray) -> np.ndarray:
    # node queries must hit stored values exactly despite rounding in the division
    r = np.round(g)
    return np.where(np.abs(g - r) < 1e-9, r, g)


def _bilinear(grid: TerrainGrid, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    gx = _snap((x - grid.origin[0]) / grid.cell_size)
    gy = _snap((y - grid.origin[1]) / grid.cell_size)
    ix = np.clip(np.floor(gx).astype(int), 0, grid.n_cols - 2)
    iy = np.clip(np.floor(gy).astype(int), 0, grid.n_rows - 2)
    fx = gx - ix
    fy = gy - iy
    d = grid.depth
    bottom = d[iy, ix] * (1 - fx) + d[iy, ix + 1] * fx
    top = d[iy + 1, ix] * (1 - fx) + d[iy + 1, ix + 1] * fx
    return bottom * (1 - fy) + top * fy


def depth_at(grid: TerrainGrid, x, y):
    """Bilinear depth at ``(x, y)``; raises for points outside the extent."""
    xa, ya = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    inside = grid.contains(xa, ya)
    if not np.all(inside):
        bad = np.flatnonzero(~inside.ravel())[0]
        bx, by = xa.ravel()[bad], ya.ravel()[bad]
        raise ValueError(f"query ({bx:.3f}, {by:.3f}) outside grid extent {grid.extent}")
    out = _bilinear(grid, xa, ya)
    return float(out) if out.ndim == 0 else out


def depth_at_clamped(grid: TerrainGrid, x, y):
    """Like :func:`depth_at` but clamps queries onto the boundary."""
    xmin, ymin, xmax, ymax = grid.extent
    xa = np.clip(np.asarray(x, dtype=float), xmin, xmax)
    ya = np.clip(np.asarray(y, dtype=float), ymin, ymax)
    out = _bilinear(grid, xa, ya)
    return float(out) if out.ndim == 0 else out


def gt_pointcloud(grid: TerrainGrid, resolution: float, area=None) -> np.ndarray:
    """Sample ``(x, y, depth)`` on a regular lattice, row-major.

    ``area`` optionally restricts sampling to ``(xmin, ymin, xmax, ymax)``
    inside the grid extent.
    """
    if resolution < grid.cell_size / 4:
        raise ValueError("resolution must be at least cell_size / 4")
    xmin, ymin, xmax, ymax = grid.extent if area is None else area
    nx = int(np.floor((xmax - xmin) / resolution + 1 + 1e-9))
    ny = int(np.floor((ymax - ymin) / resolution + 1 + 1e-9))
    xs = xmin + resolution * np.arange(nx)
    ys = ymin + resolution * np.arange(ny)
    xx, yy = np.meshgrid(xs, ys)
    xx, yy = xx.ravel(), yy.ravel()
    return np.column_stack([xx, yy, depth_at(grid, xx, yy)])
