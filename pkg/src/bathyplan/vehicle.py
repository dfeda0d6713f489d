"""AUV kinematics at fixed depth, dead-reckoned pose belief and Dubins paths."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(theta):
    """Map angles into (-pi, pi]."""
    t = np.asarray(theta, dtype=float)
    w = np.mod(t + math.pi, TWO_PI) - math.pi
    w = np.where(w == -math.pi, math.pi, w)
    return float(w) if w.ndim == 0 else w


def mod2pi(theta: float) -> float:
    return theta - TWO_PI * math.floor(theta / TWO_PI)


class Pose(NamedTuple):
    x: float
    y: float
    theta: float

    @classmethod
    def make(cls, x, y, theta) -> "Pose":
        return cls(float(x), float(y), wrap_angle(theta))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])


@dataclass(frozen=True)
class PoseBelief:
    mean: Pose
    cov: np.ndarray

    def __post_init__(self):
        cov = np.array(self.cov, dtype=float).reshape(3, 3)
        if not np.allclose(cov, cov.T, atol=1e-9):
            raise ValueError("pose covariance must be symmetric")
        object.__setattr__(self, "cov", 0.5 * (cov + cov.T))


@dataclass
class VehicleConfig:
    speed: float = 0.8
    turn_radius_min: float = 10.0
    process_noise: np.ndarray = field(
        default_factory=lambda: np.diag([5e-4, 5e-4, 1e-9]))
    initial_cov: np.ndarray = field(
        default_factory=lambda: np.diag([0.01, 0.01, 1e-6]))

    def __post_init__(self):
        if self.speed <= 0:
            raise ValueError("speed must be positive")
        if self.turn_radius_min <= 0:
            raise ValueError("turn_radius_min must be positive")
        self.process_noise = np.asarray(self.process_noise, dtype=float).reshape(3, 3)
        self.initial_cov = np.asarray(self.initial_cov, dtype=float).reshape(3, 3)
        for name in ("process_noise", "initial_cov"):
            m = getattr(self, name)
            if not np.allclose(m, m.T) or np.linalg.eigvalsh(0.5 * (m + m.T)).min() < -1e-12:
                raise ValueError(f"{name} must be symmetric PSD")

    @property
    def max_turn_rate(self) -> float:
        return self.speed / self.turn_radius_min


def psd_sqrt(M: np.ndarray) -> np.ndarray:
    """Factor ``A`` with ``A A^T = M`` for PSD ``M`` (Cholesky, eigen fallback)."""
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(0.5 * (M + M.T))
        return V * np.sqrt(np.clip(w, 0.0, None))


def _check_turn_rate(turn_rate: float, dt: float, cfg: VehicleConfig) -> None:
    if not dt > 0:
        raise ValueError("dt must be positive")
    if abs(turn_rate) > cfg.max_turn_rate * (1 + 1e-9):
        raise ValueError(
            f"turn rate {turn_rate:.4f} rad/s exceeds limit {cfg.max_turn_rate:.4f} rad/s")


def unicycle(pose: Pose, speed: float, turn_rate: float, dt: float) -> Pose:
    """Closed-form constant speed / constant turn-rate motion."""
    x, y, th = pose
    if abs(turn_rate) < 1e-12:
        return Pose(x + speed * dt * math.cos(th), y + speed * dt * math.sin(th), th)
    rho = speed / turn_rate
    th2 = th + turn_rate * dt
    return Pose(x + rho * (math.sin(th2) - math.sin(th)),
                y - rho * (math.cos(th2) - math.cos(th)),
                wrap_angle(th2))


def unicycle_jacobian(pose: Pose, speed: float, turn_rate: float, dt: float) -> np.ndarray:
    th = pose.theta
    J = np.eye(3)
    if abs(turn_rate) < 1e-12:
        J[0, 2] = -speed * dt * math.sin(th)
        J[1, 2] = speed * dt * math.cos(th)
    else:
        rho = speed / turn_rate
        th2 = th + turn_rate * dt
        J[0, 2] = rho * (math.cos(th2) - math.cos(th))
        J[1, 2] = rho * (math.sin(th2) - math.sin(th))
    return J


def step_true(pose: Pose, turn_rate: float, dt: float, cfg: VehicleConfig,
              rng: np.random.Generator) -> Pose:
    """Advance the true vehicle pose with process noise ``W * dt``."""
    _check_turn_rate(turn_rate, dt, cfg)
    nxt = unicycle(pose, cfg.speed, turn_rate, dt)
    if not np.any(cfg.process_noise):
        return nxt
    noise = psd_sqrt(cfg.process_noise * dt) @ rng.standard_normal(3)
    return Pose.make(nxt.x + noise[0], nxt.y + noise[1], nxt.theta + noise[2])


def propagate_belief(belief: PoseBelief, turn_rate: float, dt: float,
                     cfg: VehicleConfig) -> PoseBelief:
    """Dead-reckoning prediction: noiseless mean, linearised covariance."""
    _check_turn_rate(turn_rate, dt, cfg)
    J = unicycle_jacobian(belief.mean, cfg.speed, turn_rate, dt)
    cov = J @ belief.cov @ J.T + cfg.process_noise * dt
    return PoseBelief(unicycle(belief.mean, cfg.speed, turn_rate, dt), 0.5 * (cov + cov.T))


# ---------------------------------------------------------------------------
# Dubins paths

WORDS = ("LSL", "RSR", "LSR", "RSL", "RLR", "LRL")


def _word_lsl(a, b, d):
    sa, sb, ca, cb = math.sin(a), math.sin(b), math.cos(a), math.cos(b)
    p2 = 2 + d * d - 2 * math.cos(a - b) + 2 * d * (sa - sb)
    if p2 < 0:
        return None
    tmp = math.atan2(cb - ca, d + sa - sb)
    return mod2pi(-a + tmp), math.sqrt(p2), mod2pi(b - tmp)


def _word_rsr(a, b, d):
    sa, sb, ca, cb = math.sin(a), math.sin(b), math.cos(a), math.cos(b)
    p2 = 2 + d * d - 2 * math.cos(a - b) + 2 * d * (sb - sa)
    if p2 < 0:
        return None
    tmp = math.atan2(ca - cb, d - sa + sb)
    return mod2pi(a - tmp), math.sqrt(p2), mod2pi(-b + tmp)


def _word_lsr(a, b, d):
    sa, sb, ca, cb = math.sin(a), math.sin(b), math.cos(a), math.cos(b)
    p2 = -2 + d * d + 2 * math.cos(a - b) + 2 * d * (sa + sb)
    if p2 < 0:
        return None
    p = math.sqrt(p2)
    tmp = math.atan2(-ca - cb, d + sa + sb) - math.atan2(-2.0, p)
    return mod2pi(-a + tmp), p, mod2pi(-mod2pi(b) + tmp)


def _word_rsl(a, b, d):
    sa, sb, ca, cb = math.sin(a), math.sin(b), math.cos(a), math.cos(b)
    p2 = -2 + d * d + 2 * math.cos(a - b) - 2 * d * (sa + sb)
    if p2 < 0:
        return None
    p = math.sqrt(p2)
    tmp = math.atan2(ca + cb, d - sa - sb) - math.atan2(2.0, p)
    return mod2pi(a - tmp), p, mod2pi(b - tmp)


def _word_rlr(a, b, d):
    sa, sb, ca, cb = math.sin(a), math.sin(b), math.cos(a), math.cos(b)
    tmp = (6.0 - d * d + 2 * math.cos(a - b) + 2 * d * (sa - sb)) / 8.0
    if abs(tmp) > 1:
        return None
    p = mod2pi(TWO_PI - math.acos(tmp))
    t = mod2pi(a - math.atan2(ca - cb, d - sa + sb) + p / 2.0)
    return t, p, mod2pi(a - b - t + p)


def _word_lrl(a, b, d):
    sa, sb, ca, cb = math.sin(a), math.sin(b), math.cos(a), math.cos(b)
    tmp = (6.0 - d * d + 2 * math.cos(a - b) + 2 * d * (sb - sa)) / 8.0
    if abs(tmp) > 1:
        return None
    p = mod2pi(TWO_PI - math.acos(tmp))
    t = mod2pi(-a - math.atan2(ca - cb, d + sa - sb) + p / 2.0)
    return t, p, mod2pi(mod2pi(b) - a - t + p)


_WORD_FUNCS = {"LSL": _word_lsl, "RSR": _word_rsr, "LSR": _word_lsr,
               "RSL": _word_rsl, "RLR": _word_rlr, "LRL": _word_lrl}


@dataclass(frozen=True)
class DubinsPath:
    start: Pose
    end: Pose
    word: str
    segment_params: tuple[float, float, float]  # metres
    radius: float

    @property
    def length(self) -> float:
        return float(sum(self.segment_params))

    def curvatures(self) -> tuple[float, float, float]:
        k = {"L": 1.0 / self.radius, "R": -1.0 / self.radius, "S": 0.0}
        return tuple(k[c] for c in self.word)

    def segment_at(self, s: float) -> int:
        acc = 0.0
        for i, seg in enumerate(self.segment_params):
            acc += seg
            if s < acc:
                return i
        return 2

    def pose_at(self, s: float) -> Pose:
        """Pose after travelling arc length ``s`` (clamped to the path)."""
        s = min(max(s, 0.0), self.length)
        pose = self.start
        for seg, kappa in zip(self.segment_params, self.curvatures()):
            step = min(seg, s)
            if step > 0:
                pose = _advance(pose, kappa, step)
            s -= step
            if s <= 0:
                break
        return pose

    def poses_at(self, s: np.ndarray) -> np.ndarray:
        """Vectorised :meth:`pose_at`; returns an ``(n, 3)`` array."""
        s = np.clip(np.asarray(s, dtype=float), 0.0, self.length)
        out = np.empty((s.size, 3))
        seg_start = self.start
        offset = 0.0
        for i, (seg, kappa) in enumerate(zip(self.segment_params, self.curvatures())):
            lo = offset
            hi = offset + seg
            mask = (s >= lo) & ((s < hi) if i < 2 else (s <= hi))
            if np.any(mask):
                out[mask] = _advance_many(seg_start, kappa, s[mask] - lo)
            seg_start = _advance(seg_start, kappa, seg) if seg > 0 else seg_start
            offset = hi
        return out

    def sample(self, ds: float) -> list[Pose]:
        return sample_path(self, ds)


def _advance(pose: Pose, kappa: float, s: float) -> Pose:
    x, y, th = pose
    if kappa == 0.0:
        return Pose(x + s * math.cos(th), y + s * math.sin(th), th)
    th2 = th + kappa * s
    return Pose(x + (math.sin(th2) - math.sin(th)) / kappa,
                y - (math.cos(th2) - math.cos(th)) / kappa,
                wrap_angle(th2))


def _advance_many(pose: Pose, kappa: float, s: np.ndarray) -> np.ndarray:
    x, y, th = pose
    if kappa == 0.0:
        return np.column_stack([x + s * math.cos(th), y + s * math.sin(th),
                                np.full_like(s, th)])
    th2 = th + kappa * s
    return np.column_stack([x + (np.sin(th2) - math.sin(th)) / kappa,
                            y - (np.cos(th2) - math.cos(th)) / kappa,
                            wrap_angle(th2)])


def dubins_word(start: Pose, end: Pose, radius: float, word: str):
    """Normalised ``(t, p, q)`` for one word, or ``None`` if infeasible."""
    dx, dy = end.x - start.x, end.y - start.y
    d = math.hypot(dx, dy) / radius
    phi = mod2pi(math.atan2(dy, dx))
    a = mod2pi(start.theta - phi)
    b = mod2pi(end.theta - phi)
    return _WORD_FUNCS[word](a, b, d)


def dubins_shortest(start: Pose, end: Pose, radius: float) -> DubinsPath:
    if not radius > 0:
        raise ValueError("radius must be positive")
    start = Pose.make(*start)
    end = Pose.make(*end)
    if (math.hypot(end.x - start.x, end.y - start.y) < 1e-12
            and abs(wrap_angle(end.theta - start.theta)) < 1e-12):
        return DubinsPath(start, end, "LSL", (0.0, 0.0, 0.0), radius)
    best = None
    for word in WORDS:
        params = dubins_word(start, end, radius, word)
        if params is None:
            continue
        total = sum(params)
        if best is None or total < best[0] - 1e-12:
            best = (total, word, params)
    _, word, params = best
    return DubinsPath(start, end, word, tuple(float(p * radius) for p in params), radius)


def straight_path(start: Pose, length: float, radius: float) -> DubinsPath:
    start = Pose.make(*start)
    end = _advance(start, 0.0, length)
    return DubinsPath(start, end, "LSL", (0.0, float(length), 0.0), radius)


def sample_path(path: DubinsPath, ds: float) -> list[Pose]:
    """Poses at arc lengths ``0, ds, 2ds, ...`` plus the exact endpoint."""
    if not ds > 0:
        raise ValueError("ds must be positive")
    n = int(math.floor(path.length / ds + 1e-9))
    s = ds * np.arange(n + 1)
    if path.length - s[-1] > 1e-9:
        s = np.append(s, path.length)
    arr = path.poses_at(s)
    return [Pose(*row) for row in arr]


TRAJECTORY_HEADER = ("t", "x_true", "y_true", "theta_true", "x_bel", "y_bel", "theta_bel",
                     "cov_xx", "cov_xy", "cov_yy")


def trajectory_row(t: float, true_pose: Pose, belief: PoseBelief) -> list[str]:
    c = belief.cov
    vals = (t, *true_pose, *belief.mean, c[0, 0], c[0, 1], c[1, 1])
    return [repr(float(v)) for v in vals]


def write_trajectory_log(rows, path) -> None:
    """Write ``(t, true_pose, belief)`` triples as trajectory CSV."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_HEADER)
        for t, true_pose, belief in rows:
            w.writerow(trajectory_row(t, true_pose, belief))
