"""Constructed surrogate fields shared by planner, baseline and acceptance tests."""

import math

import numpy as np

from bathyplan.planner import (FieldSurrogate, PlannerConfig, Region, _acq_stats, condition_on_leg,
                               leg_path, ucb)
from bathyplan.vehicle import Pose, PoseBelief

EXTENT = (0.0, 0.0, 300.0, 300.0)
START = Pose(50.0, 150.0, 0.0)
NEAR = np.array([50.0, 185.0])
FAR = np.array([105.0, 150.0])


def gauss(X, c, amp, w):
    d2 = ((X - c) ** 2).sum(-1)
    return amp * np.exp(-d2 / (2 * w * w))


def two_lobe_field() -> FieldSurrogate:
    """Converged map with a near lobe, a slightly weaker far lobe and an
    unexplored half-plane that only the far lobe brings within reach."""

    def std(X):
        X = np.atleast_2d(X)
        unexplored = 1.0 / (1.0 + np.exp(-(X[:, 0] - 145.0) / 4.0))
        return (0.05 + gauss(X, NEAR, 1.0, 8.0) + gauss(X, FAR, 0.9, 8.0)
                + unexplored)

    return FieldSurrogate(lambda X: np.full(len(np.atleast_2d(X)), -20.0), std,
                          prior_mean=-20.0, prior_std=1.0, cond_lengthscale=5.0)


def two_lobe_config(**kw) -> PlannerConfig:
    base = dict(extent=EXTENT, d_max=2, q=3, gamma=0.9, horizon_radius=60.0)
    base.update(kw)
    return PlannerConfig(**base)


def start_belief() -> PoseBelief:
    return PoseBelief(START, np.diag([0.01, 0.01, 1e-6]))


def disc_grid(center, radius, step, extent=EXTENT):
    xs = np.arange(center[0] - radius, center[0] + radius + 1e-9, step)
    ys = np.arange(center[1] - radius, center[1] + radius + 1e-9, step)
    g = np.array([(x, y) for x in xs for y in ys])
    return g[Region(center, radius, extent).contains(g)]


def rollout_exact(model, v, cfg, n=400):
    """Quadrature version of the rollout: mean deviation on a disc grid."""
    r = cfg.rollout_r
    pts = disc_grid(v, r, 2 * r / math.sqrt(n))
    _, sd = _acq_stats(model, pts)
    return float(np.mean(sd))


def enumerate_two_step(model, belief, cfg, step=5.0, step2=10.0):
    """Exhaustive depth-2 values of every first viewpoint on a grid."""
    start = belief.mean
    firsts = disc_grid(start.xy, cfg.horizon_radius, step)
    mu, sd = _acq_stats(model, firsts)
    r1 = ucb(mu, sd, cfg.beta)
    values = np.empty(len(firsts))
    for i, v1 in enumerate(firsts):
        child = condition_on_leg(model, leg_path(start, v1, cfg.turn_radius), cfg)
        seconds = disc_grid(v1, cfg.horizon_radius, step2)
        m2, s2 = _acq_stats(child, seconds)
        r2 = ucb(m2, s2, cfg.beta)
        top = np.argsort(-r2)[:5]
        best2 = max(r2[j] + cfg.gamma * rollout_exact(child, seconds[j], cfg) for j in top)
        values[i] = r1[i] + cfg.gamma * best2
    return firsts, r1, values
