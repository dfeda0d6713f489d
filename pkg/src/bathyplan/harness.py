"""Mission runner: configuration, receding-horizon survey loop, suites and map export.

Two clock modes are supported.  ``sync`` charges planning a fixed number
of simulated seconds per operation and is bit-reproducible for a fixed
seed.  ``realtime`` plans in a worker thread against a wall-clock deadline
while the simulation advances at ``time_scale`` times real time.
"""

from __future__ import annotations

import concurrent.futures as cf
import csv
import dataclasses
import logging
import math
import os
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .baselines import lawnmower_path, myopic_plan, pattern_length
from .evaluation import (MetricSample, consistency_rmse, curve_rows, first_reach,
                         improvement_at_parity, summarize, write_metrics_csv)
from .planner import PlannerConfig, PlanResult, SimDeadline, WallDeadline, plan_next, random_plan, swath_points
from .sensor import SensorConfig, simulate_ping, write_ping_log
from .svgp import (KernelParams, SvgpTrainer, TrainBuffer, TrainConfig, inducing_grid, init_model,
                   load_checkpoint, save_checkpoint)
from .terrain import FeatureSpec, TerrainGrid, gt_pointcloud, load_grid, synth_terrain
from .vehicle import (DubinsPath, Pose, PoseBelief, VehicleConfig, propagate_belief, step_true,
                      trajectory_row, TRAJECTORY_HEADER)

log = logging.getLogger(__name__)

METHODS = ("ipp", "myopic", "lawnmower")
ENV_PREFIX = "SURVEY_"


class ConfigError(ValueError):
    """Malformed or invalid configuration."""


class MissionError(RuntimeError):
    """A sub-module failed hard during a mission."""


# ---------------------------------------------------------------------------
# configuration

@dataclass
class TerrainConfig:
    file: str = ""
    base_depth: float = 20.0
    bumps: str = "75 85 -7 18; 160 150 -6 22; 165 65 -5 12"
    noise_amplitude: float = 0.2
    noise_lengthscale: float = 10.0
    seed: int = 0
    origin_x: float = 0.0
    origin_y: float = 0.0
    cell_size: float = 1.0
    n_rows: int = 251
    n_cols: int = 251

    def __post_init__(self):
        parse_bumps(self.bumps)
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        if self.n_rows < 2 or self.n_cols < 2:
            raise ValueError("terrain needs at least 2 rows and columns")

    def feature_spec(self) -> FeatureSpec:
        return FeatureSpec(self.base_depth, parse_bumps(self.bumps), self.noise_amplitude,
                           self.noise_lengthscale, self.seed)


@dataclass
class ModelConfig:
    num_inducing: int = 250
    lengthscale: float = 10.0
    signal_variance: float = 1.0
    noise_variance: float = 0.01
    inducing_jitter: float = 0.25

    def __post_init__(self):
        if self.num_inducing < 1:
            raise ValueError("num_inducing must be >= 1")
        if min(self.lengthscale, self.signal_variance, self.noise_variance) <= 0:
            raise ValueError("kernel parameters and noise must be positive")


@dataclass
class MissionConfig:
    terrain: TerrainConfig = field(default_factory=TerrainConfig)
    vehicle: VehicleConfig = field(default_factory=VehicleConfig)
    sensor: SensorConfig = field(default_factory=SensorConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    method: str = "ipp"
    distance_budget: float = 1500.0
    budget_from_lawnmower: bool = False
    seed: int = 0
    output_dir: str = "runs/out"
    checkpoint_every: float = 50.0
    margin: float = 25.0
    clock: str = "sync"
    time_scale: float = 1.0
    gt_resolution: float = 2.0
    overlap: float = 0.10
    entry_corner: str = "sw"
    beam_stride: int = 1
    fantasize_remaining: bool = True
    log_pings: bool = False
    save_checkpoints: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.distance_budget < 0:
            raise ValueError("distance_budget must be non-negative")
        if self.checkpoint_every <= 0:
            raise ValueError("checkpoint_every must be positive")
        if self.margin < 0:
            raise ValueError("margin must be non-negative")
        if self.clock not in ("sync", "realtime"):
            raise ValueError("clock must be 'sync' or 'realtime'")
        if self.time_scale <= 0:
            raise ValueError("time_scale must be positive")
        if self.gt_resolution <= 0:
            raise ValueError("gt_resolution must be positive")
        if not 0 <= self.overlap < 1:
            raise ValueError("overlap must lie in [0, 1)")
        if self.beam_stride < 1:
            raise ValueError("beam_stride must be >= 1")
        if self.planner.horizon_radius <= self.vehicle.turn_radius_min:
            raise ValueError("planner.horizon_radius must exceed vehicle.turn_radius_min")


SECTIONS = {"terrain": TerrainConfig, "vehicle": VehicleConfig, "sensor": SensorConfig,
            "svgp": (ModelConfig, TrainConfig), "planner": PlannerConfig}
# derived from the other sections at run time
_DERIVED = {("planner", "extent"), ("planner", "depth_nominal"), ("planner", "turn_radius"),
            ("planner", "opening_angle"), ("planner", "time_budget")}
_MISSION_FIELDS = [f.name for f in dataclasses.fields(MissionConfig)
                   if f.name not in ("terrain", "vehicle", "sensor", "model", "train", "planner")]


def parse_bumps(text: str) -> tuple:
    """``"cx cy amplitude radius; ..."`` to FeatureSpec bump tuples."""
    out = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        vals = chunk.replace(",", " ").split()
        if len(vals) != 4:
            raise ValueError(f"bump '{chunk}' needs 'cx cy amplitude radius'")
        cx, cy, a, r = (float(v) for v in vals)
        if r <= 0:
            raise ValueError(f"bump radius must be positive in '{chunk}'")
        out.append(((cx, cy), a, r))
    return tuple(out)


def _key_table() -> dict[str, tuple[str, type, str]]:
    """Config key to ``(section attribute, dataclass, field name)``."""
    table = {}
    for sec, classes in SECTIONS.items():
        classes = classes if isinstance(classes, tuple) else (classes,)
        for cls in classes:
            attr = {"svgp": "model" if cls is ModelConfig else "train"}.get(sec, sec)
            for f in dataclasses.fields(cls):
                if (sec, f.name) in _DERIVED:
                    continue
                table[f"{sec}.{f.name}"] = (attr, cls, f.name)
    for name in _MISSION_FIELDS:
        table[f"mission.{name}"] = ("", MissionConfig, name)
    return table


KEYS = _key_table()


def _field_default(cls, name):
    f = next(f for f in dataclasses.fields(cls) if f.name == name)
    if f.default is not dataclasses.MISSING:
        return f.default
    return f.default_factory()


def _parse_value(text: str, default, annotation: str):
    text = text.strip()
    if isinstance(default, bool):
        low = text.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ValueError(f"expected a boolean, got '{text}'")
    if isinstance(default, int):
        try:
            return int(text)
        except ValueError:
            try:
                f = float(text)
            except ValueError:
                raise ValueError(f"expected an integer, got '{text}'") from None
            if not f.is_integer():
                raise ValueError(f"expected an integer, got '{text}'") from None
            return int(f)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, str):
        return text.strip('"').strip("'")
    if isinstance(default, np.ndarray):
        vals = [float(v) for v in text.replace(",", " ").split()]
        n = default.shape[0]
        if len(vals) == n:
            return np.diag(vals)
        if len(vals) == n * n:
            return np.array(vals).reshape(n, n)
        raise ValueError(f"expected {n} diagonal or {n * n} matrix entries, got {len(vals)}")
    if default is None and "float" in annotation:
        return None if text.lower() in ("none", "") else float(text)
    raise ValueError(f"unsupported value '{text}'")


def _build(overrides: dict[str, tuple[object, str]]) -> MissionConfig:
    groups: dict[tuple[str, type], dict] = {}
    top: dict = {}
    for key, (value, _) in overrides.items():
        attr, cls, name = KEYS[key]
        if cls is MissionConfig:
            top[name] = value
        else:
            groups.setdefault((attr, cls), {})[name] = value
    parts = {}
    for attr, cls in [("terrain", TerrainConfig), ("vehicle", VehicleConfig),
                      ("sensor", SensorConfig), ("model", ModelConfig), ("train", TrainConfig),
                      ("planner", PlannerConfig)]:
        kw = groups.get((attr, cls), {})
        if cls is PlannerConfig:
            turn = groups.get(("vehicle", VehicleConfig), {}).get("turn_radius_min", 10.0)
            kw = {"turn_radius": turn, **kw}
        parts[attr] = cls(**kw)
    return MissionConfig(**parts, **top)


def _apply(overrides: dict, key: str, raw: str, where: str) -> None:
    if key not in KEYS:
        raise ConfigError(f"{where}: unknown key '{key}'")
    attr, cls, name = KEYS[key]
    ann = next(f.type for f in dataclasses.fields(cls) if f.name == name)
    try:
        value = _parse_value(raw, _field_default(cls, name), str(ann))
    except ValueError as exc:
        raise ConfigError(f"{where}: {key}: {exc}") from None
    trial = dict(overrides)
    trial[key] = (value, where)
    try:
        _build(trial)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: {key}: {exc}") from None
    overrides[key] = (value, where)


def parse_config_text(text: str, source: str = "<config>", env: Optional[dict] = None) -> MissionConfig:
    overrides: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in body.split("=", 1))
        _apply(overrides, key, raw, f"{source}:{lineno}")
    env = os.environ if env is None else env
    env_map = {ENV_PREFIX + k.upper().replace(".", "_"): k for k in KEYS}
    env_map.update({ENV_PREFIX + k.upper().replace(".", "__"): k for k in KEYS})
    for var in sorted(env):
        if var.startswith(ENV_PREFIX):
            if var not in env_map:
                raise ConfigError(f"environment: unknown override '{var}'")
            _apply(overrides, env_map[var], env[var], f"environment {var}")
    return _build(overrides)


def parse_config(path, env: Optional[dict] = None) -> MissionConfig:
    """Read a flat ``key = value`` file; ``SURVEY_*`` variables override it."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{path}: no such file")
    return parse_config_text(p.read_text(), str(path), env)


# ---------------------------------------------------------------------------
# path queue

class PathQueue:
    """Active Dubins legs with the vehicle's arc-length progress on the first."""

    def __init__(self):
        self.legs: deque[DubinsPath] = deque()
        self.s = 0.0

    def __bool__(self) -> bool:
        return bool(self.legs)

    def splice(self, path: DubinsPath) -> None:
        if path.length > 0:
            self.legs.append(path)

    def remaining(self) -> float:
        return sum(leg.length for leg in self.legs) - self.s

    def end_pose(self) -> Pose:
        return self.legs[-1].end

    def advance(self, ds: float) -> list[tuple[float, float]]:
        """Consume ``ds`` metres; returns ``(curvature, length)`` pieces traversed."""
        pieces = []
        while ds > 1e-12 and self.legs:
            leg = self.legs[0]
            bounds = np.cumsum(leg.segment_params)
            for seg_end, kappa in zip(bounds, leg.curvatures()):
                if self.s < seg_end - 1e-12 and ds > 1e-12:
                    step = min(seg_end - self.s, ds)
                    pieces.append((kappa, step))
                    self.s += step
                    ds -= step
            if self.s >= leg.length - 1e-12:
                self.legs.popleft()
                self.s = 0.0
        return pieces

    def fantasy_points(self, width: float, spacing: float, n_across: int) -> np.ndarray:
        pts = [swath_points(leg, width, spacing, n_across, self.s if i == 0 else 0.0)
               for i, leg in enumerate(self.legs)]
        return np.vstack(pts) if pts else np.zeros((0, 2))


# ---------------------------------------------------------------------------
# missions

@dataclass
class RunResult:
    method: str
    seed: int
    curve: list[MetricSample]
    planning: list[dict]
    n_pings: int
    distance: float
    budget: float
    lawnmower_length: float
    empty_queue_ticks: int
    out_dir: Optional[Path]
    model: object = None

    @property
    def run_id(self) -> str:
        return f"{self.method}-s{self.seed}"

    def tags(self) -> list[str]:
        return [p["tag"] for p in self.planning]


def build_terrain(cfg: MissionConfig) -> TerrainGrid:
    t = cfg.terrain
    if t.file:
        return load_grid(t.file)
    return synth_terrain(t.feature_spec(), (t.origin_x, t.origin_y), t.cell_size, t.n_rows, t.n_cols)


def survey_area(grid: TerrainGrid, margin: float) -> tuple[float, float, float, float]:
    xmin, ymin, xmax, ymax = grid.extent
    area = (xmin + margin, ymin + margin, xmax - margin, ymax - margin)
    if area[2] <= area[0] or area[3] <= area[1]:
        raise ConfigError("margin leaves no survey area inside the terrain")
    return area


PLANNING_HEADER = ("cycle", "t", "tag", "viewpoint_x", "viewpoint_y", "theta", "tree_iters",
                   "models_trained", "wall_time_s")


class _Mission:
    def __init__(self, cfg: MissionConfig, out_dir: Optional[Path]):
        self.cfg = cfg
        self.out_dir = out_dir
        root = np.random.default_rng(cfg.seed)
        (self.motion_rng, self.sensor_rng, self.model_rng,
         self.train_rng, self.plan_rng) = root.spawn(5)
        self.grid = build_terrain(cfg)
        self.area = survey_area(self.grid, cfg.margin)
        gt = gt_pointcloud(self.grid, cfg.gt_resolution, self.area)
        self.gt = np.column_stack([gt[:, :2], -gt[:, 2]])
        self.depth_nominal = float(gt[:, 2].mean())
        self.pcfg = dataclasses.replace(
            cfg.planner, extent=self.area, depth_nominal=self.depth_nominal,
            turn_radius=cfg.vehicle.turn_radius_min, opening_angle=cfg.sensor.opening_angle)
        self.lm_legs = lawnmower_path(self.area, self.depth_nominal, cfg.sensor, cfg.overlap,
                                      cfg.vehicle.turn_radius_min, cfg.entry_corner)
        self.lm_length = pattern_length(self.lm_legs)
        self.budget = self.lm_length if cfg.budget_from_lawnmower else cfg.distance_budget

        mc = cfg.model
        Z = inducing_grid(self.area, mc.num_inducing, self.model_rng, mc.inducing_jitter)
        model = init_model(Z, KernelParams(mc.signal_variance, mc.lengthscale), mc.noise_variance,
                           mean_const=-self.depth_nominal)
        self.trainer = SvgpTrainer(model, cfg.train, rng=self.train_rng)
        self.buffer = TrainBuffer(cfg.train.buffer_capacity)

        start = self.lm_legs[0].start
        self.true_pose = start
        self.belief = PoseBelief(start, cfg.vehicle.initial_cov)
        self.queue = PathQueue()
        self.t = 0.0
        self.distance = 0.0
        self.cycle = 0
        self.n_pings = 0
        self.credit = 0.0
        self.empty_ticks = 0
        self.planning: list[dict] = []
        self.curve: list[MetricSample] = []
        self.traj_rows: list[list[str]] = []
        self.pings = []
        self.next_cp = 0.0
        self.pending: Optional[cf.Future] = None
        self.pool: Optional[cf.ThreadPoolExecutor] = None

    # -- planning ---------------------------------------------------------
    def _planning_inputs(self):
        model = self.trainer.model.snapshot()
        if self.queue:
            start = self.queue.end_pose()
            if self.cfg.fantasize_remaining:
                pts = self.queue.fantasy_points(self.pcfg.swath, self.pcfg.fantasy_spacing,
                                                self.pcfg.fantasy_across)
                xmin, ymin, xmax, ymax = self.area
                pts = pts[(pts[:, 0] >= xmin) & (pts[:, 0] <= xmax)
                          & (pts[:, 1] >= ymin) & (pts[:, 1] <= ymax)]
                if len(pts):
                    model = model.conditioned(pts)
        else:
            start = self.belief.mean
        belief = PoseBelief(start, self.belief.cov)
        rng = np.random.default_rng(self.plan_rng.integers(2**63))
        return model, belief, rng

    def _plan_fn(self):
        return plan_next if self.cfg.method == "ipp" else myopic_plan

    def _record_plan(self, res: PlanResult, charged: float) -> None:
        self.queue.splice(res.path)
        wall = charged if self.cfg.clock == "sync" else res.wall_time_s
        self.planning.append({"cycle": self.cycle, "t": self.t, "tag": res.tag,
                              "viewpoint_x": float(res.viewpoint[0]),
                              "viewpoint_y": float(res.viewpoint[1]), "theta": res.theta,
                              "tree_iters": res.tree_iters, "models_trained": res.models_trained,
                              "wall_time_s": wall})
        self.cycle += 1

    def _plan_sync(self) -> None:
        model, belief, rng = self._planning_inputs()
        deadline = SimDeadline(self.queue.remaining() / self.cfg.vehicle.speed)
        try:
            res = self._plan_fn()(model, belief, self.pcfg, rng, deadline)
        except Exception as exc:
            raise MissionError(f"planner failed at cycle {self.cycle}: {exc}") from exc
        self._record_plan(res, deadline.spent)

    def _maybe_plan(self) -> None:
        if self.cfg.method == "lawnmower":
            return
        need = (not self.queue) or self.queue.remaining() < self.pcfg.replan_threshold
        if self.cfg.clock == "sync":
            if need:
                self._plan_sync()
            return
        if self.pending is not None and self.pending.done():
            fut, self.pending = self.pending, None
            try:
                res = fut.result()
            except Exception as exc:
                raise MissionError(f"planner failed at cycle {self.cycle}: {exc}") from exc
            self._record_plan(res, res.wall_time_s)
            need = (not self.queue) or self.queue.remaining() < self.pcfg.replan_threshold
        if need and self.pending is None:
            model, belief, rng = self._planning_inputs()
            wall = self.queue.remaining() / self.cfg.vehicle.speed / self.cfg.time_scale
            self.pending = self.pool.submit(self._plan_fn(), model, belief, self.pcfg, rng,
                                            WallDeadline(wall))

    def _emergency(self) -> None:
        # queue ran dry before a plan arrived: keep the vehicle moving
        self.empty_ticks += 1
        _, belief, rng = self._planning_inputs()
        self._record_plan(random_plan(belief, self.pcfg, rng), 0.0)

    # -- simulation -------------------------------------------------------
    def _checkpoint(self) -> None:
        model = self.trainer.model.snapshot()
        rmse = consistency_rmse(self.gt, model)
        self.curve.append(MetricSample(self.distance, self.t, rmse, self.buffer.total_seen))
        if self.out_dir is not None and self.cfg.save_checkpoints:
            cp_dir = self.out_dir / "checkpoints"
            cp_dir.mkdir(exist_ok=True)
            save_checkpoint(model, cp_dir / f"model_{len(self.curve) - 1:04d}.npz")

    def _tick(self, dt: float) -> None:
        vc = self.cfg.vehicle
        ds = vc.speed * dt
        pieces = self.queue.advance(ds)
        for kappa, length in pieces:
            sub = length / vc.speed
            try:
                self.true_pose = step_true(self.true_pose, kappa * vc.speed, sub, vc, self.motion_rng)
                self.belief = propagate_belief(self.belief, kappa * vc.speed, sub, vc)
            except ValueError as exc:
                raise MissionError(f"vehicle failed at cycle {self.cycle}: {exc}") from exc
        self.distance += sum(length for _, length in pieces)
        self.t += dt
        self.traj_rows.append(trajectory_row(self.t, self.true_pose, self.belief))
        if self.grid.contains(self.true_pose.x, self.true_pose.y):
            try:
                ping = simulate_ping(self.true_pose, self.belief, self.grid, self.cfg.sensor,
                                     self.sensor_rng, self.t)
            except ValueError as exc:
                raise MissionError(f"sensor failed at cycle {self.cycle}: {exc}") from exc
            self.n_pings += 1
            if self.cfg.log_pings:
                self.pings.append(ping)
            k = self.cfg.beam_stride
            sel = slice(None) if k == 1 else (ping.beam_idx % k == 0)
            if len(ping):
                self.buffer.add(ping.positions[sel, :2], ping.positions[sel, 2], ping.omegas[sel])
        if len(self.buffer):
            self.credit += self.cfg.train.steps_per_ping
            while self.credit >= 1.0:
                self.credit -= 1.0
                try:
                    self.trainer.train_step(self.buffer)
                except Exception as exc:
                    raise MissionError(f"svgp failed at cycle {self.cycle}: {exc}") from exc

    def run(self) -> RunResult:
        cfg = self.cfg
        dt = 1.0 / cfg.sensor.ping_rate
        if cfg.method == "lawnmower":
            for leg in self.lm_legs:
                self.queue.splice(leg)
        if cfg.clock == "realtime":
            self.pool = cf.ThreadPoolExecutor(max_workers=1)
        wall0 = time.perf_counter()
        try:
            self._checkpoint()
            self.next_cp = cfg.checkpoint_every
            if self.budget > 0 and cfg.method != "lawnmower":
                # initial plan from the prior model, no time pressure
                model, belief, rng = self._planning_inputs()
                self._record_plan(self._plan_fn()(model, belief, self.pcfg, rng), 0.0)
            while self.distance < self.budget - 1e-9:
                self._maybe_plan()
                if not self.queue:
                    if cfg.method == "lawnmower":
                        break
                    self._emergency()
                step_dt = min(dt, (self.budget - self.distance) / cfg.vehicle.speed)
                self._tick(step_dt)
                if self.distance >= self.next_cp - 1e-9:
                    self._checkpoint()
                    self.next_cp += cfg.checkpoint_every
                if cfg.clock == "realtime":
                    lag = self.t / cfg.time_scale - (time.perf_counter() - wall0)
                    if lag > 0:
                        time.sleep(lag)
            if self.curve[-1].distance_travelled < self.distance - 1e-9:
                self._checkpoint()
        finally:
            if self.pool is not None:
                self.pool.shutdown(wait=True, cancel_futures=True)
            self._flush()
        return RunResult(cfg.method, cfg.seed, self.curve, self.planning, self.n_pings,
                         self.distance, self.budget, self.lm_length, self.empty_ticks,
                         self.out_dir, self.trainer.model)

    def _flush(self) -> None:
        if self.out_dir is None:
            return
        out = self.out_dir
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "trajectory.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRAJECTORY_HEADER)
            w.writerows(self.traj_rows)
        with open(out / "planning.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(PLANNING_HEADER)
            for p in self.planning:
                w.writerow([p["cycle"], repr(float(p["t"])), p["tag"], repr(p["viewpoint_x"]),
                            repr(p["viewpoint_y"]), repr(float(p["theta"])), p["tree_iters"],
                            p["models_trained"], repr(float(p["wall_time_s"]))])
        if self.cfg.log_pings:
            write_ping_log(self.pings, out / "pings.csv")
        rid = f"{self.cfg.method}-s{self.cfg.seed}"
        write_metrics_csv(curve_rows(self.curve, rid, self.cfg.method, self.cfg.seed),
                          out / "metrics.csv")
        save_checkpoint(self.trainer.model, out / "model_final.npz")


def run_mission(cfg: MissionConfig, out_dir=None) -> RunResult:
    """Run one survey; writes logs under ``out_dir`` (``cfg.output_dir`` if omitted, ``False`` for none)."""
    if out_dir is None:
        out_dir = cfg.output_dir
    out = Path(out_dir) if out_dir else None
    return _Mission(cfg, out).run()


# ---------------------------------------------------------------------------
# suites

@dataclass
class SuiteResult:
    runs: dict[str, list[RunResult]]
    failures: list[tuple[str, int, str]]
    summary: dict[str, list[dict]]
    parity: dict[str, dict]


def parity_stats(runs: dict[str, list[RunResult]], factor: float = 1.05) -> dict[str, dict]:
    """Per method: distance to reach ``factor`` times the same-seed lawn-mower terminal RMSE."""
    lm = {r.seed: r for r in runs.get("lawnmower", [])}
    out = {}
    for method, rs in runs.items():
        dists, terminal_ratio, imps = [], [], []
        for r in rs:
            if r.seed not in lm:
                continue
            ref = lm[r.seed]
            target = factor * ref.curve[-1].rmse
            d = first_reach(r.curve, target)
            dists.append(math.inf if d is None else d)
            terminal_ratio.append(r.curve[-1].rmse / ref.curve[-1].rmse)
            imps.append(improvement_at_parity(r.curve, ref.curve, target))
        if dists:
            out[method] = {"reach_distances": dists, "median_reach": float(np.median(dists)),
                           "lawnmower_length": float(np.median([lm[r.seed].distance for r in rs
                                                                if r.seed in lm])),
                           "terminal_ratio": terminal_ratio,
                           "median_terminal_ratio": float(np.median(terminal_ratio)),
                           "improvement": imps}
    return out


def run_suite(configs: list[MissionConfig], n_seeds: int, out_dir=None, base_seed: int = 0) -> SuiteResult:
    """Run every config for ``n_seeds`` seeds; failures are recorded, not raised."""
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    out = Path(out_dir) if out_dir else None
    runs: dict[str, list[RunResult]] = {}
    failures = []
    for cfg in configs:
        for k in range(n_seeds):
            seed = base_seed + k
            c = dataclasses.replace(cfg, seed=seed)
            run_dir = (out / f"{c.method}-s{seed}") if out is not None else False
            try:
                r = run_mission(c, run_dir)
            except Exception as exc:  # noqa: BLE001 - suite keeps going
                log.error("run %s seed %d failed: %s", c.method, seed, exc)
                failures.append((c.method, seed, str(exc)))
                continue
            runs.setdefault(c.method, []).append(r)
    summary = {m: summarize([r.curve for r in rs]) for m, rs in runs.items()}
    parity = parity_stats(runs)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_summary_csv(summary, out / "summary.csv")
        rows = [row for rs in runs.values() for r in rs
                for row in curve_rows(r.curve, r.run_id, r.method, r.seed)]
        write_metrics_csv(rows, out / "metrics.csv")
        write_parity_csv(parity, out / "parity.csv")
    return SuiteResult(runs, failures, summary, parity)


def write_summary_csv(summary: dict[str, list[dict]], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "checkpoint", "distance_m", "median_rmse_m", "min_rmse_m",
                    "max_rmse_m", "n_runs"])
        for method, rows in summary.items():
            for i, r in enumerate(rows):
                w.writerow([method, i, repr(r["distance_m"]), repr(r["median"]), repr(r["min"]),
                            repr(r["max"]), r["n_runs"]])


def write_parity_csv(parity: dict[str, dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "median_reach_m", "lawnmower_length_m", "median_terminal_ratio"])
        for method, p in parity.items():
            w.writerow([method, repr(p["median_reach"]), repr(p["lawnmower_length"]),
                        repr(p["median_terminal_ratio"])])


# ---------------------------------------------------------------------------
# map export

def _write_pgm(path: Path, img: np.ndarray) -> tuple[float, float]:
    lo, hi = float(np.min(img)), float(np.max(img))
    span = hi - lo
    scaled = np.zeros(img.shape) if span <= 0 else (img - lo) / span
    data = np.round(scaled * 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(data.tobytes())
    return lo, hi


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM file")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ValueError("only 8-bit PGM supported")
    return np.frombuffer(parts[4][: w * h], dtype=np.uint8).reshape(h, w)


def map_raster(model, extent, resolution: float) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and std on pixel centres, row 0 at the northern edge."""
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    xmin, ymin, xmax, ymax = extent
    nx = max(1, int(math.ceil((xmax - xmin) / resolution - 1e-9)))
    ny = max(1, int(math.ceil((ymax - ymin) / resolution - 1e-9)))
    xs = xmin + (np.arange(nx) + 0.5) * resolution
    ys = ymax - (np.arange(ny) + 0.5) * resolution
    xx, yy = np.meshgrid(xs, ys)
    mu, var = model.predict(np.column_stack([xx.ravel(), yy.ravel()]))
    return mu.reshape(ny, nx), np.sqrt(np.maximum(var, 0)).reshape(ny, nx)


def export_maps(model, extent, resolution: float, prefix) -> tuple[Path, Path]:
    """Write ``<prefix>_mean.pgm``, ``<prefix>_std.pgm`` and a ``<prefix>_scale.txt`` sidecar."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    mean, std = map_raster(model, extent, resolution)
    paths = (prefix.with_name(prefix.name + "_mean.pgm"), prefix.with_name(prefix.name + "_std.pgm"))
    lines = [f"extent {' '.join(repr(float(v)) for v in extent)}", f"resolution {resolution!r}"]
    for p, img, name in zip(paths, (mean, std), ("mean", "std")):
        lo, hi = _write_pgm(p, img)
        lines.append(f"{name} {p.name} min {lo!r} max {hi!r}")
    prefix.with_name(prefix.name + "_scale.txt").write_text("\n".join(lines) + "\n")
    return paths


def export_checkpoint(path, resolution: float, extent=None, prefix=None) -> tuple[Path, Path]:
    model = load_checkpoint(path)
    if extent is None:
        Z = model.Z
        extent = (float(Z[:, 0].min()), float(Z[:, 1].min()), float(Z[:, 0].max()), float(Z[:, 1].max()))
    prefix = Path(path).with_suffix("") if prefix is None else prefix
    return export_maps(model, extent, resolution, prefix)


def config_keys() -> list[str]:
    return sorted(KEYS)

