"""Two-layer Bayesian-optimisation planner.

Layer 1 picks the next viewpoint with a flat-UCT tree whose nodes are
expanded by batch (q-candidate) UCB optimisation.  Layer 2 picks the
arrival heading of the Dubins path to that viewpoint by 1-D BO over the
swath-integrated UCB.  :func:`plan_next` wraps both in the fail-safe
ladder (tree, then myopic BO, then a random viewpoint).

Surrogates are duck-typed: anything with ``predict(X) -> (mean, var)``,
``prior_mean``, ``prior_std`` and ``conditioned(X)`` works, which covers
:class:`~bathyplan.svgp.SvgpModel` snapshots and :class:`FieldSurrogate`.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize
from scipy.stats import qmc

from .sensor import swath_width
from .vehicle import DubinsPath, Pose, PoseBelief, dubins_shortest, wrap_angle

TAGS = ("nonmyopic", "myopic_fallback", "random_fallback")


class NonConvergence(RuntimeError):
    """BO could not produce a candidate (flat landscape or no budget)."""


class Surrogate(Protocol):
    prior_mean: float
    prior_std: float

    def predict(self, X) -> tuple[np.ndarray, np.ndarray]: ...

    def conditioned(self, X) -> "Surrogate": ...


@dataclass
class PlannerConfig:
    beta: float = 100.0
    uct_c: float = 12.0
    gamma: float = 0.9
    d_max: int = 2
    q: int = 3
    n_mc_qucb: int = 512
    horizon_radius: float = 60.0
    rollout_samples: int = 64
    rollout_radius: Optional[float] = None
    replan_threshold: float = 30.0
    time_budget: float = 60.0
    restarts: int = 6
    candidate_separation: Optional[float] = None
    raw_samples: int = 64
    max_iters: int = 64
    opt_maxiter: int = 40
    heading_init: int = 4
    heading_iters: int = 12
    heading_samples: int = 256
    heading_lengthscale: float = 1.0
    depth_nominal: float = 20.0
    opening_angle: float = math.radians(90.0)
    turn_radius: float = 10.0
    fantasy_spacing: float = 4.0
    fantasy_across: int = 7
    conditioning: str = "exact"
    finetune_steps: int = 50
    extent: Optional[tuple[float, float, float, float]] = None
    inject_flat_field: bool = False
    # simulated seconds charged per operation in synchronous mode
    cost_optimize_q: float = 3.5
    cost_optimize_single: float = 1.2
    cost_train_model: float = 10.7 / 3.0
    cost_heading: float = 0.8
    min_runtime: float = 0.0

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("q must be >= 1")
        if self.d_max < 0:
            raise ValueError("d_max must be >= 0")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.horizon_radius <= self.turn_radius:
            raise ValueError("horizon_radius must exceed the turn radius")
        if self.n_mc_qucb < 1 or self.rollout_samples < 1 or self.heading_samples < 1:
            raise ValueError("sample counts must be >= 1")
        if self.conditioning not in ("exact", "finetune"):
            raise ValueError("conditioning must be 'exact' or 'finetune'")

    @property
    def rollout_r(self) -> float:
        return self.horizon_radius / 2.0 if self.rollout_radius is None else self.rollout_radius

    @property
    def separation(self) -> float:
        """Minimum distance between batch candidates (half a swath by default)."""
        if self.candidate_separation is None:
            return self.swath / 2.0
        return self.candidate_separation

    @property
    def swath(self) -> float:
        return swath_width(self.depth_nominal, self.opening_angle)


# ---------------------------------------------------------------------------
# budgets

class SimDeadline:
    """Deadline in simulated seconds; operations charge fixed costs."""

    def __init__(self, budget: float):
        self.budget = float(budget)
        self.spent = 0.0

    def remaining(self) -> float:
        return self.budget - self.spent

    def can_afford(self, cost: float) -> bool:
        return self.spent + cost <= self.budget

    def charge(self, cost: float) -> None:
        self.spent += cost


class WallDeadline:
    """Wall-clock deadline; cost estimates are ignored, only time left counts."""

    def __init__(self, seconds: float):
        self.t_end = time.perf_counter() + seconds

    def remaining(self) -> float:
        return self.t_end - time.perf_counter()

    def can_afford(self, cost: float) -> bool:
        return self.remaining() > 0

    def charge(self, cost: float) -> None:
        pass


# ---------------------------------------------------------------------------
# analytic surrogates (constructed fields, adversarial injection)

@dataclass
class FieldSurrogate:
    """Surrogate defined by closed-form mean and standard deviation fields.

    Conditioning shrinks the deviation near the conditioning points with a
    squared-exponential footprint of width ``cond_lengthscale``.
    """

    mean_fn: Callable[[np.ndarray], np.ndarray]
    std_fn: Callable[[np.ndarray], np.ndarray]
    prior_mean: float = 0.0
    prior_std: float = 1.0
    cond_lengthscale: float = 10.0
    cond_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        sd = np.asarray(self.std_fn(X), dtype=float)
        if len(self.cond_points):
            d2 = ((X[:, None, :] - self.cond_points[None, :, :]) ** 2).sum(-1)
            keep = np.prod(1.0 - 0.95 * np.exp(-d2 / (2 * self.cond_lengthscale**2)), axis=1)
            sd = sd * keep
        return np.asarray(self.mean_fn(X), dtype=float), sd * sd

    def conditioned(self, X) -> "FieldSurrogate":
        pts = np.vstack([self.cond_points, np.atleast_2d(X)])
        return FieldSurrogate(self.mean_fn, self.std_fn, self.prior_mean, self.prior_std,
                              self.cond_lengthscale, pts)

    def snapshot(self):
        return self

    def scaled(self, k: float) -> "FieldSurrogate":
        """Multiply anomaly and deviation by ``k`` (reward-scale checks)."""
        c = self.prior_mean
        return FieldSurrogate(lambda X: c + k * (self.mean_fn(X) - c),
                              lambda X: k * self.std_fn(X), c, k * self.prior_std,
                              self.cond_lengthscale, self.cond_points)


def flat_field(prior_mean: float = 0.0, prior_std: float = 1.0) -> FieldSurrogate:
    return FieldSurrogate(lambda X: np.full(len(X), prior_mean),
                          lambda X: np.full(len(X), prior_std), prior_mean, prior_std)


# ---------------------------------------------------------------------------
# acquisition functions

def ucb(mu, sigma, beta: float):
    return mu + math.sqrt(beta) * sigma


def qucb(mus, sigmas, beta: float, n: int = 512, rng: np.random.Generator | None = None,
         base_samples: np.ndarray | None = None):
    """Monte Carlo batch UCB via the reparameterisation trick.

    ``mus`` and ``sigmas`` may be ``(q,)`` or batched ``(B, q)``.
    """
    mus = np.asarray(mus, dtype=float)
    sig = np.asarray(sigmas, dtype=float)
    if np.any(sig < 0):
        raise ValueError("sigmas must be non-negative")
    q = mus.shape[-1]
    if base_samples is None:
        rng = np.random.default_rng() if rng is None else rng
        base_samples = rng.standard_normal((n, q))
    scale = sig * math.sqrt(beta * math.pi / 2.0)
    # (B, N, q): diagonal Cholesky factor applied to each base sample
    vals = mus[..., None, :] + np.abs(base_samples * scale[..., None, :])
    return vals.max(axis=-1).mean(axis=-1)


def _acq_stats(model, pts: np.ndarray):
    mu, var = model.predict(pts)
    return mu - model.prior_mean, np.sqrt(np.maximum(var, 0.0))


# ---------------------------------------------------------------------------
# search region

class Region:
    """Horizon disc around ``center`` intersected with the survey rectangle."""

    def __init__(self, center, radius: float, extent=None):
        self.extent = extent
        c = np.asarray(center, dtype=float)[:2]
        if extent is not None:
            xmin, ymin, xmax, ymax = extent
            cc = np.clip(c, [xmin, ymin], [xmax, ymax])
            if np.hypot(*(cc - c)) >= radius:
                raise ValueError("horizon disc does not intersect the survey extent")
        self.center = c
        self.radius = float(radius)
        lo = c - radius
        hi = c + radius
        if extent is not None:
            lo = np.maximum(lo, [extent[0], extent[1]])
            hi = np.minimum(hi, [extent[2], extent[3]])
        self.lo, self.hi = lo, hi

    def project(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        d = pts - self.center
        r = np.hypot(d[:, 0], d[:, 1])
        f = np.minimum(1.0, self.radius / np.maximum(r, 1e-300))
        out = self.center + d * f[:, None]
        if self.extent is not None:
            out = np.clip(out, [self.extent[0], self.extent[1]], [self.extent[2], self.extent[3]])
        return out

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        ok = np.hypot(*(pts - self.center).T) <= self.radius + 1e-9
        if self.extent is not None:
            xmin, ymin, xmax, ymax = self.extent
            ok &= ((pts[:, 0] >= xmin - 1e-9) & (pts[:, 0] <= xmax + 1e-9)
                   & (pts[:, 1] >= ymin - 1e-9) & (pts[:, 1] <= ymax + 1e-9))
        return ok

    def from_unit(self, u: np.ndarray) -> np.ndarray:
        """Map unit-square samples uniformly onto the disc, then clip."""
        r = self.radius * np.sqrt(u[:, 0])
        phi = 2 * math.pi * u[:, 1]
        return self.project(self.center + np.column_stack([r * np.cos(phi), r * np.sin(phi)]))

    def uniform(self, n: int, rng: np.random.Generator, r_min: float = 0.0) -> np.ndarray:
        out = np.zeros((0, 2))
        for _ in range(50):
            u = rng.uniform(size=(4 * n, 2))
            r = np.sqrt(r_min**2 + u[:, 0] * (self.radius**2 - r_min**2))
            phi = 2 * math.pi * u[:, 1]
            pts = self.center + np.column_stack([r * np.cos(phi), r * np.sin(phi)])
            out = np.vstack([out, pts[self.contains(pts)]])
            if len(out) >= n:
                return out[:n]
        if len(out) == 0:
            return self.project(self.center + np.zeros((n, 2)))
        return out[rng.integers(0, len(out), size=n)]


# ---------------------------------------------------------------------------
# layer 1: candidate optimisation

@dataclass
class CandidateResult:
    points: np.ndarray
    value: float
    converged: bool


def optimize_q_candidates(model, center, cfg: PlannerConfig, rng: np.random.Generator,
                          q: int | None = None) -> CandidateResult:
    """Maximise batch UCB (plain UCB when ``q == 1``) over the horizon region.

    A sequential greedy batch seeds a joint multi-start ascent over all
    ``2q`` coordinates.  Raises :class:`NonConvergence` when the
    acquisition landscape is flat.
    """
    q = cfg.q if q is None else q
    region = Region(center, cfg.horizon_radius, cfg.extent)
    scale = max(float(model.prior_std), 1e-12)
    base = rng.standard_normal((cfg.n_mc_qucb, q))
    bounds1 = [(region.lo[0], region.hi[0]), (region.lo[1], region.hi[1])]

    def acq(batches: np.ndarray) -> np.ndarray:
        """Acquisition of ``(B, 2j)`` flattened batches, ``j <= q``."""
        j = batches.shape[1] // 2
        pts = region.project(batches.reshape(-1, 2))
        mu, sd = _acq_stats(model, pts)
        mu = mu.reshape(-1, j)
        sd = sd.reshape(-1, j)
        if j == 1:
            return ucb(mu[:, 0], sd[:, 0], cfg.beta)
        return qucb(mu, sd, cfg.beta, base_samples=base[:, :j])

    def ascend(f, x0, bounds):
        res = minimize(lambda x: -f(x) / scale, x0, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": cfg.opt_maxiter})
        x = region.project(res.x.reshape(-1, 2)).ravel()
        return x, f(x)

    n_raw = max(cfg.raw_samples, cfg.restarts)
    singles = region.from_unit(qmc.LatinHypercube(d=2, seed=rng).random(n_raw * q))
    single_vals = acq(singles)
    if single_vals.max() - single_vals.min() < 1e-9 * scale:
        raise NonConvergence("acquisition landscape is flat over the horizon")

    sep = cfg.separation

    def crowding(batches: np.ndarray) -> np.ndarray:
        p = region.project(batches.reshape(-1, 2)).reshape(len(batches), -1, 2)
        d = np.linalg.norm(p[:, :, None, :] - p[:, None, :, :], axis=-1)
        iu = np.triu_indices(p.shape[1], 1)
        return np.maximum(0.0, sep - d[:, iu[0], iu[1]]).sum(axis=1) / max(sep, 1e-12)

    # candidates closer than ``sep`` are penalised
    penalty = 10.0 * math.sqrt(max(cfg.beta, 1.0)) * scale

    def objective(batches: np.ndarray) -> np.ndarray:
        return acq(batches) - penalty * crowding(batches)

    # the restart budget is shared between greedy steps and the joint polish
    per_step = max(2, math.ceil(cfg.restarts / q)) if q > 1 else cfg.restarts
    improved = False
    # greedy: add one point at a time, optimising only the new point
    chosen = np.zeros(0)
    for j in range(q):
        pool = np.hstack([np.tile(chosen, (len(singles), 1)), singles])
        pool_vals = objective(pool)
        best_x, best_v = None, -np.inf
        for i in np.argsort(-pool_vals, kind="stable")[:per_step]:
            prefix = chosen

            def f_new(x, prefix=prefix):
                return objective(np.concatenate([prefix, x])[None, :])[0]

            x, v = ascend(f_new, singles[i], bounds1)
            if v > pool_vals[i] + 1e-12 * scale:
                improved = True
            else:
                x, v = singles[i], pool_vals[i]
            if v > best_v:
                best_x, best_v = x, v
        chosen = np.concatenate([chosen, best_x])
    greedy, greedy_v = chosen, float(objective(chosen[None, :])[0])

    # joint polish from the greedy batch and the best random joint batches
    def joint(x):
        return objective(x[None, :])[0]

    if q == 1:
        return CandidateResult(region.project(greedy.reshape(1, 2)), greedy_v, improved)
    joint_raw = region.from_unit(qmc.LatinHypercube(d=2 * q, seed=rng)
                                 .random(n_raw).reshape(-1, 2)).reshape(n_raw, 2 * q)
    joint_vals = objective(joint_raw)
    starts = [(greedy, greedy_v)] + [(joint_raw[i], joint_vals[i]) for i in
                                     np.argsort(-joint_vals, kind="stable")[: cfg.restarts // 2]]
    best_x, best_v = None, -np.inf
    for x0, v0 in starts:
        x, v = ascend(joint, x0, bounds1 * q)
        if v > v0 + 1e-12 * scale:
            improved = True
        else:
            x, v = x0, v0
        if v > best_v:
            best_x, best_v = x, v
    if crowding(best_x[None, :])[0] > 0:
        # separation unattainable in a clipped horizon: report the raw batch value
        best_v = float(acq(best_x[None, :])[0])
    pts = region.project(best_x.reshape(q, 2))
    return CandidateResult(pts, float(best_v), improved)


def rollout_value(model, viewpoint, cfg: PlannerConfig, rng: np.random.Generator) -> float:
    """Mean predictive deviation over a disc around ``viewpoint``."""
    region = Region(viewpoint, cfg.rollout_r, cfg.extent)
    pts = region.uniform(cfg.rollout_samples, rng)
    _, sd = _acq_stats(model, pts)
    return float(np.mean(sd))


# ---------------------------------------------------------------------------
# flat UCT

@dataclass(eq=False)
class TreeNode:
    viewpoint: np.ndarray
    reward: float
    depth: int
    pose: Pose
    model_ref: object = None       # surrogate used to expand this node's subtree
    parent: Optional["TreeNode"] = None
    value: float = -math.inf
    visits: int = 0
    children: list = field(default_factory=list)
    rollout: float = 0.0
    exhausted: bool = False


def select_child(node: TreeNode, uct_c: float) -> int:
    """Flat-UCT selection among the node's non-exhausted children."""
    live = [i for i, ch in enumerate(node.children) if not ch.exhausted]
    if not live:
        raise ValueError("node has no selectable child")
    for i in live:
        if node.children[i].visits == 0:
            return i
    log_n = math.log(max(node.visits, 1))
    scores = [node.children[i].value + uct_c * math.sqrt(log_n / node.children[i].visits)
              for i in live]
    return live[int(np.argmax(scores))]


def backprop_max(path: list[TreeNode], leaf_return: float, gamma: float) -> None:
    """Max-backup along ``path`` ordered leaf first."""
    if not math.isfinite(leaf_return):
        raise ValueError("leaf return must be finite")
    ret = leaf_return
    for node in path:
        node.value = max(node.value, node.reward + gamma * ret)
        node.visits += 1
        ret = node.value


def leg_path(start: Pose, target_xy, radius: float) -> DubinsPath:
    """Dubins leg arriving with the straight-in heading."""
    tx, ty = float(target_xy[0]), float(target_xy[1])
    dx, dy = tx - start.x, ty - start.y
    heading = math.atan2(dy, dx) if math.hypot(dx, dy) > 1e-9 else start.theta
    return dubins_shortest(start, Pose.make(tx, ty, heading), radius)


def swath_points(path: DubinsPath, width: float, spacing: float, n_across: int,
                 s0: float = 0.0) -> np.ndarray:
    """Grid of seabed points covered by the swath along ``path`` from arc length ``s0``."""
    span = path.length - s0
    if span <= 0:
        return np.zeros((0, 2))
    n = max(2, int(math.ceil(span / spacing)) + 1)
    poses = path.poses_at(np.linspace(s0, path.length, n))
    offs = np.linspace(-width / 2, width / 2, n_across)
    left = np.column_stack([-np.sin(poses[:, 2]), np.cos(poses[:, 2])])
    pts = poses[:, None, :2] + offs[None, :, None] * left[:, None, :]
    return pts.reshape(-1, 2)


def condition_on_leg(model, path: DubinsPath, cfg: PlannerConfig, rng=None, s0: float = 0.0):
    """Child model conditioned on fantasised beams along ``path``."""
    pts = swath_points(path, cfg.swath, cfg.fantasy_spacing, cfg.fantasy_across, s0)
    if cfg.extent is not None and len(pts):
        xmin, ymin, xmax, ymax = cfg.extent
        pts = pts[(pts[:, 0] >= xmin) & (pts[:, 0] <= xmax)
                  & (pts[:, 1] >= ymin) & (pts[:, 1] <= ymax)]
    if len(pts) == 0:
        return model
    if cfg.conditioning == "finetune" and hasattr(model, "var_chol"):
        return _finetune_on(model, pts, cfg, rng)
    return model.conditioned(pts)


def _finetune_on(model, pts, cfg: PlannerConfig, rng):
    from .svgp import SvgpTrainer, TrainConfig, sample_ui_batch

    mean, var = model.predict(pts)
    om = (var + model.noise_variance)[:, None, None] * np.eye(2)[None]
    tcfg = TrainConfig(minibatch=len(pts), train_hyper=False, train_inducing=False)
    trainer = SvgpTrainer(model.snapshot(), tcfg, rng=rng or np.random.default_rng(0))
    for _ in range(cfg.finetune_steps):
        X = sample_ui_batch(pts, om, trainer.ui_rng)
        trainer.step_on(X, mean, max(model.n_seen, len(pts)))
    return trainer.model


@dataclass
class TreeResult:
    viewpoint: np.ndarray
    value: float
    iterations: int
    expansions: int
    models_trained: int
    root: TreeNode


def expand(node: TreeNode, cfg: PlannerConfig, rng: np.random.Generator,
           deadline=None) -> tuple[float, int]:
    """Create ``q`` children of ``node``; returns ``(best child value, models trained)``."""
    if node.depth >= cfg.d_max:
        raise ValueError("cannot expand a node at maximum depth")
    if node.children:
        raise ValueError("node already expanded")
    trained = 0
    if node.model_ref is None:
        parent = node.parent
        node.model_ref = condition_on_leg(parent.model_ref, leg_path(parent.pose, node.viewpoint,
                                                                     cfg.turn_radius), cfg, rng)
        trained = 1
        if deadline is not None:
            deadline.charge(cfg.cost_train_model)
    model = node.model_ref
    cand = optimize_q_candidates(model, node.viewpoint, cfg, rng)
    if deadline is not None:
        deadline.charge(cfg.cost_optimize_q)
    mu, sd = _acq_stats(model, cand.points)
    rewards = ucb(mu, sd, cfg.beta)
    best = -math.inf
    for p, r in zip(cand.points, rewards):
        heading = math.atan2(p[1] - node.pose.y, p[0] - node.pose.x)
        child = TreeNode(viewpoint=p.copy(), reward=float(r), depth=node.depth + 1,
                         pose=Pose.make(p[0], p[1], heading), parent=node)
        child.rollout = rollout_value(model, p, cfg, rng)  # frontier uses parent model
        child.value = child.reward + cfg.gamma * child.rollout
        child.exhausted = child.depth >= cfg.d_max
        node.children.append(child)
        best = max(best, child.value)
    return best, trained


def _mark_exhausted(node: TreeNode) -> None:
    while node is not None:
        if node.children and all(ch.exhausted for ch in node.children):
            node.exhausted = True
            node = node.parent
        else:
            break


def tree_search(model, belief: PoseBelief, cfg: PlannerConfig, rng: np.random.Generator,
                deadline=None, max_iters: int | None = None) -> TreeResult:
    """Anytime flat-UCT search; returns the best root child found."""
    max_iters = cfg.max_iters if max_iters is None else max_iters
    start = belief.mean
    root = TreeNode(viewpoint=np.array([start.x, start.y]), reward=0.0, depth=0, pose=start,
                    model_ref=model)
    iters = expansions = trained = 0
    while iters < max_iters and not root.exhausted:
        node, path = root, [root]
        while node.children:
            node = node.children[select_child(node, cfg.uct_c)]
            path.append(node)
        cost = cfg.cost_optimize_q + (cfg.cost_train_model if node.model_ref is None else 0.0)
        if deadline is not None and not deadline.can_afford(cost):
            break
        try:
            best, k = expand(node, cfg, rng, deadline)
        except NonConvergence:
            if node is root:
                raise
            # a flat child horizon: keep its rollout estimate and stop descending
            node.exhausted = True
            _mark_exhausted(node.parent)
            iters += 1
            continue
        trained += k
        expansions += 1
        backprop_max(path[::-1], best, cfg.gamma)
        _mark_exhausted(node)
        iters += 1
    if not root.children:
        raise NonConvergence("no expansion completed before the deadline")
    best_i = max(range(len(root.children)),
                 key=lambda i: (root.children[i].value, root.children[i].visits, -i))
    ch = root.children[best_i]
    return TreeResult(ch.viewpoint.copy(), ch.value, iters, expansions, trained, root)


# ---------------------------------------------------------------------------
# layer 2: heading optimisation

class HeadingSurrogate:
    """Exact GP over arrival heading with an incrementally grown Cholesky factor.

    Distances are chordal (``2|sin(d/2)|``) so the Matern kernel stays
    positive definite on the circle.  Targets are standardised on the fly;
    the factor depends only on the inputs.
    """

    def __init__(self, lengthscale: float = 1.0, noise: float = 1e-6):
        self.lengthscale = lengthscale
        self.noise = noise
        self.thetas: list[float] = []
        self.values: list[float] = []
        self.L = np.zeros((0, 0))

    def _k(self, a, b) -> np.ndarray:
        a = np.atleast_1d(a)[:, None]
        b = np.atleast_1d(b)[None, :]
        r = 2.0 * np.abs(np.sin((a - b) / 2.0))
        t = math.sqrt(5.0) * r / self.lengthscale
        return (1.0 + t + t * t / 3.0) * np.exp(-t)

    def append(self, theta: float, value: float) -> None:
        n = len(self.thetas)
        k_new = self._k(np.array(self.thetas), theta)[:, 0] if n else np.zeros(0)
        kss = 1.0 + self.noise
        if n:
            ell = solve_triangular(self.L, k_new, lower=True)
            d = math.sqrt(max(kss - ell @ ell, 1e-12))
            L = np.zeros((n + 1, n + 1))
            L[:n, :n] = self.L
            L[n, :n] = ell
            L[n, n] = d
        else:
            L = np.array([[math.sqrt(kss)]])
        self.L = L
        self.thetas.append(float(theta))
        self.values.append(float(value))

    def refactor(self) -> np.ndarray:
        K = self._k(np.array(self.thetas), np.array(self.thetas)) + self.noise * np.eye(len(self.thetas))
        return np.linalg.cholesky(K)

    def predict(self, grid):
        y = np.array(self.values)
        mu0, sd0 = y.mean(), y.std()
        sd0 = sd0 if sd0 > 1e-12 * max(1.0, abs(mu0)) else 1.0
        ys = (y - mu0) / sd0
        Ks = self._k(np.asarray(grid), np.array(self.thetas))
        alpha = cho_solve((self.L, True), ys)
        V = solve_triangular(self.L, Ks.T, lower=True)
        mu = Ks @ alpha
        var = np.maximum(1.0 - np.sum(V * V, axis=0), 0.0)
        return mu0 + sd0 * mu, sd0 * np.sqrt(var)


def path_value(model, path: DubinsPath, depth_nominal: float, n_samples: int,
               rng: np.random.Generator, cfg: PlannerConfig | None = None,
               base_samples: np.ndarray | None = None) -> float:
    """Monte Carlo integral of UCB over the swath footprint of ``path``."""
    cfg = PlannerConfig() if cfg is None else cfg
    if path.length <= 0:
        return 0.0
    w = swath_width(depth_nominal, cfg.opening_angle)
    u = rng.uniform(size=(n_samples, 2)) if base_samples is None else base_samples
    poses = path.poses_at(u[:, 0] * path.length)
    off = (u[:, 1] - 0.5) * w
    pts = poses[:, :2] + off[:, None] * np.column_stack([-np.sin(poses[:, 2]), np.cos(poses[:, 2])])
    vals = np.zeros(len(pts))
    inside = np.ones(len(pts), dtype=bool)
    if cfg.extent is not None:
        xmin, ymin, xmax, ymax = cfg.extent
        inside = ((pts[:, 0] >= xmin) & (pts[:, 0] <= xmax)
                  & (pts[:, 1] >= ymin) & (pts[:, 1] <= ymax))
    if np.any(inside):
        mu, sd = _acq_stats(model, pts[inside])
        vals[inside] = ucb(mu, sd, cfg.beta)
    return float(path.length * w * vals.mean())


@dataclass
class HeadingResult:
    theta: float
    path: DubinsPath
    value: float
    evaluations: int


def optimize_heading(model, s_i: Pose, target_xy, cfg: PlannerConfig,
                     rng: np.random.Generator) -> HeadingResult:
    """1-D BO over the arrival heading at ``target_xy``."""
    tx, ty = float(target_xy[0]), float(target_xy[1])
    if math.hypot(tx - s_i.x, ty - s_i.y) < 1e-9:
        raise ValueError("target coincides with the start position")
    base = rng.uniform(size=(cfg.heading_samples, 2))
    sur = HeadingSurrogate(cfg.heading_lengthscale)
    evaluated: list[tuple[float, float, DubinsPath]] = []

    def evaluate(theta: float):
        path = dubins_shortest(s_i, Pose.make(tx, ty, theta), cfg.turn_radius)
        v = path_value(model, path, cfg.depth_nominal, cfg.heading_samples, rng, cfg, base)
        evaluated.append((theta, v, path))
        sur.append(theta, v)

    init = [-math.pi / 2, 0.0, math.pi / 2, math.pi][: max(1, cfg.heading_init)]
    for th in init:
        evaluate(th)
    grid = np.linspace(-math.pi, math.pi, 360, endpoint=False)
    sqrt_beta = math.sqrt(cfg.beta)
    for _ in range(cfg.heading_iters):
        mu, sd = sur.predict(grid)
        acq = mu + sqrt_beta * sd
        seen = np.array([t for t, _, _ in evaluated])
        gap = np.abs(np.angle(np.exp(1j * (grid[:, None] - seen[None, :])))).min(axis=1)
        acq[gap < 1e-9] = -np.inf
        if not np.isfinite(acq.max()):
            break
        evaluate(float(grid[int(np.argmax(acq))]))
    best = max(range(len(evaluated)), key=lambda i: (evaluated[i][1], -i))
    th, v, path = evaluated[best]
    return HeadingResult(float(wrap_angle(th)), path, float(v), len(evaluated))


# ---------------------------------------------------------------------------
# fail-safe ladder

@dataclass
class PlanResult:
    path: DubinsPath
    tag: str
    viewpoint: np.ndarray
    theta: float
    tree_iters: int = 0
    models_trained: int = 0
    wall_time_s: float = 0.0


def myopic_viewpoint(model, belief: PoseBelief, cfg: PlannerConfig,
                     rng: np.random.Generator) -> np.ndarray:
    res = optimize_q_candidates(model, belief.mean.xy, cfg, rng, q=1)
    return res.points[0]


def random_plan(belief: PoseBelief, cfg: PlannerConfig, rng: np.random.Generator) -> PlanResult:
    """Uniform viewpoint in the outer half of the horizon disc, straight-in heading."""
    start = belief.mean
    try:
        region = Region(start.xy, cfg.horizon_radius, cfg.extent)
        target = region.uniform(1, rng, r_min=cfg.horizon_radius / 2)[0]
    except ValueError:
        # vehicle far outside the survey area: head for its centre
        xmin, ymin, xmax, ymax = cfg.extent
        target = np.array([(xmin + xmax) / 2, (ymin + ymax) / 2])
    if math.hypot(target[0] - start.x, target[1] - start.y) < 1e-6:
        target = start.xy + cfg.horizon_radius / 2 * np.array([math.cos(start.theta),
                                                               math.sin(start.theta)])
    path = leg_path(start, target, cfg.turn_radius)
    return PlanResult(path, "random_fallback", np.asarray(target, dtype=float), path.end.theta)


def _myopic_stage(model, belief: PoseBelief, cfg: PlannerConfig, rng: np.random.Generator,
                  deadline) -> Optional[PlanResult]:
    if not deadline.can_afford(cfg.cost_optimize_single + cfg.cost_heading):
        return None
    try:
        vp = myopic_viewpoint(model, belief, cfg, rng)
        deadline.charge(cfg.cost_optimize_single)
        h = optimize_heading(model, belief.mean, vp, cfg, rng)
        deadline.charge(cfg.cost_heading)
    except (NonConvergence, ValueError):
        return None
    return PlanResult(h.path, "myopic_fallback", vp, h.theta)


def plan_next(model, belief: PoseBelief, cfg: PlannerConfig, rng: np.random.Generator,
              deadline=None) -> PlanResult:
    """Total planning function: always returns a feasible path and a provenance tag.

    Each ladder rung draws from its own child generator, so the myopic rung
    reproduces :func:`bathyplan.baselines.myopic_plan` for the same seed.
    """
    t0 = time.perf_counter()
    deadline = SimDeadline(math.inf) if deadline is None else deadline
    deadline.charge(cfg.min_runtime)
    tree_rng, myopic_rng, random_rng = rng.spawn(3)
    result = None

    if deadline.can_afford(cfg.cost_optimize_q + cfg.cost_heading):
        tree_model = flat_field(model.prior_mean, model.prior_std) if cfg.inject_flat_field else model
        try:
            tree = tree_search(tree_model, belief, cfg, tree_rng, deadline)
        except (NonConvergence, ValueError):
            tree = None
        if tree is not None and deadline.can_afford(cfg.cost_heading):
            try:
                h = optimize_heading(model, belief.mean, tree.viewpoint, cfg, tree_rng)
                deadline.charge(cfg.cost_heading)
                result = PlanResult(h.path, "nonmyopic", tree.viewpoint, h.theta,
                                    tree.iterations, tree.models_trained)
            except ValueError:
                result = None

    if result is None:
        result = _myopic_stage(model, belief, cfg, myopic_rng, deadline)
    if result is None:
        result = random_plan(belief, cfg, random_rng)
    result.wall_time_s = time.perf_counter() - t0
    return result
