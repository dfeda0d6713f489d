import csv
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bathyplan.vehicle import (WORDS, DubinsPath, Pose, PoseBelief, VehicleConfig,
                               dubins_shortest, dubins_word, propagate_belief, sample_path,
                               step_true, straight_path, wrap_angle, write_trajectory_log)

ZERO = np.zeros((3, 3))


def test_wrap_angle_range():
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert Pose.make(0, 0, 3 * math.pi).theta == pytest.approx(math.pi)
    vals = wrap_angle(np.linspace(-20, 20, 1001))
    assert np.all(vals > -math.pi) and np.all(vals <= math.pi)


def test_straight_step(rng):
    cfg = VehicleConfig(process_noise=ZERO)
    p = step_true(Pose(0, 0, 0), 0.0, 1.0, cfg, rng)
    assert p == pytest.approx((0.8, 0.0, 0.0))


def test_full_circle_returns_to_start(rng):
    cfg = VehicleConfig(process_noise=ZERO)
    w = cfg.max_turn_rate
    p = Pose(3.0, -2.0, 0.4)
    q = step_true(p, w, 2 * math.pi / w, cfg, rng)
    assert math.hypot(q.x - p.x, q.y - p.y) < 1e-6
    assert abs(wrap_angle(q.theta - p.theta)) < 1e-6
    # fine steps agree with one big step
    r = p
    for _ in range(100):
        r = step_true(r, w, 2 * math.pi / w / 100, cfg, rng)
    assert np.allclose(r, q, atol=1e-9)


def test_step_rejects_bad_inputs(rng):
    cfg = VehicleConfig()
    with pytest.raises(ValueError):
        step_true(Pose(0, 0, 0), 0.0, 0.0, cfg, rng)
    with pytest.raises(ValueError):
        step_true(Pose(0, 0, 0), 1.01 * cfg.max_turn_rate, 1.0, cfg, rng)
    q = step_true(Pose(0, 0, 0), 0.0, 1e-12, VehicleConfig(process_noise=ZERO), rng)
    assert q == pytest.approx((0, 0, 0), abs=1e-9)


def test_process_noise_statistics():
    cfg = VehicleConfig(process_noise=np.diag([0.04, 0.01, 0.0]))
    rng = np.random.default_rng(1)
    ends = np.array([step_true(Pose(0, 0, 0), 0.0, 2.0, cfg, rng)[:2] for _ in range(20000)])
    assert ends[:, 0].mean() == pytest.approx(1.6, abs=0.01)
    assert ends[:, 0].var() == pytest.approx(0.08, rel=0.05)
    assert ends[:, 1].var() == pytest.approx(0.02, rel=0.05)


def test_belief_zero_noise_straight():
    cfg = VehicleConfig(process_noise=ZERO)
    b = propagate_belief(PoseBelief(Pose(0, 0, 0), ZERO), 0.0, 5.0, cfg)
    assert np.all(b.cov == 0)
    assert b.mean == pytest.approx((4.0, 0, 0))


def test_belief_linear_variance_growth():
    w = 0.3
    cfg = VehicleConfig(process_noise=np.diag([w, w, 0.0]))
    b = PoseBelief(Pose(0, 0, 0), ZERO)
    for _ in range(50):
        b = propagate_belief(b, 0.0, 0.2, cfg)
    assert b.cov[0, 0] == pytest.approx(w * 10.0, abs=1e-9)


def test_belief_stays_psd_over_random_steps():
    rng = np.random.default_rng(5)
    cfg = VehicleConfig(process_noise=np.diag([1e-3, 2e-3, 1e-5]))
    b = PoseBelief(Pose(0, 0, 0), np.diag([0.1, 0.1, 1e-4]))
    trace = np.trace(b.cov[:2, :2])
    for _ in range(10000):
        b = propagate_belief(b, rng.uniform(-1, 1) * cfg.max_turn_rate, rng.uniform(0.01, 0.2), cfg)
        assert np.array_equal(b.cov, b.cov.T)
        t = np.trace(b.cov[:2, :2])
        assert t >= trace - 1e-12
        trace = t
    assert np.linalg.eigvalsh(b.cov).min() >= -1e-12


def test_config_validation():
    with pytest.raises(ValueError):
        VehicleConfig(speed=0)
    with pytest.raises(ValueError):
        VehicleConfig(turn_radius_min=-1)
    with pytest.raises(ValueError):
        VehicleConfig(process_noise=np.diag([1, -1, 0]))


def test_collinear_dubins_is_straight():
    p = dubins_shortest(Pose(0, 0, 0), Pose(100, 0, 0), 10.0)
    assert p.length == pytest.approx(100.0, abs=1e-9)
    assert p.segment_params[0] == pytest.approx(0) and p.segment_params[2] == pytest.approx(0)


def test_degenerate_dubins():
    p = dubins_shortest(Pose(1, 2, 0.3), Pose(1, 2, 0.3), 10.0)
    assert p.length == 0.0
    assert p.pose_at(0.0) == pytest.approx((1, 2, 0.3))


def _tangent_oracle(s: Pose, e: Pose, r: float) -> float:
    """Shortest Dubins length from explicit circle/tangent geometry."""
    def centre(p, side):  # side +1 left, -1 right
        return np.array([p.x - side * r * math.sin(p.theta), p.y + side * r * math.cos(p.theta)])

    def arc(p_from, p_to, c, side):
        a0 = math.atan2(p_from[1] - c[1], p_from[0] - c[0])
        a1 = math.atan2(p_to[1] - c[1], p_to[0] - c[0])
        return r * ((side * (a1 - a0)) % (2 * math.pi))

    best = math.inf
    ps, pe = np.array([s.x, s.y]), np.array([e.x, e.y])
    for a, b in itertools.product((1, -1), repeat=2):
        c1, c2 = centre(s, a), centre(e, b)
        d = np.linalg.norm(c2 - c1)
        # straight tangents (outer when a == b, inner otherwise)
        if a == b:
            if d > 1e-12:
                u = (c2 - c1) / d
                nrm = np.array([u[1], -u[0]]) * a * r
                t1, t2 = c1 + nrm, c2 + nrm
                best = min(best, arc(ps, t1, c1, a) + d + arc(t2, pe, c2, b))
        elif d >= 2 * r:
            ang = math.atan2(*(c2 - c1)[::-1])
            alpha = math.acos(2 * r / d)
            phi = ang - a * alpha
            t1 = c1 + r * np.array([math.cos(phi), math.sin(phi)])
            t2 = c2 - r * np.array([math.cos(phi), math.sin(phi)])
            best = min(best, arc(ps, t1, c1, a) + np.linalg.norm(t2 - t1) + arc(t2, pe, c2, b))
        # three-arc words
        if a == b and d <= 4 * r and d > 1e-12:
            ang = math.atan2(*(c2 - c1)[::-1])
            h = math.acos(d / (4 * r))
            for sgn in (1, -1):
                c3 = c1 + 2 * r * np.array([math.cos(ang + sgn * h), math.sin(ang + sgn * h)])
                m1 = (c1 + c3) / 2
                m2 = (c2 + c3) / 2
                best = min(best, arc(ps, m1, c1, a) + arc(m1, m2, c3, -a) + arc(m2, pe, c2, b))
    return best


def test_dubins_matches_independent_tangent_oracle():
    rng = np.random.default_rng(7)
    for _ in range(300):
        s = Pose.make(*rng.uniform(-40, 40, 2), rng.uniform(-math.pi, math.pi))
        e = Pose.make(*rng.uniform(-40, 40, 2), rng.uniform(-math.pi, math.pi))
        p = dubins_shortest(s, e, 10.0)
        assert p.length == pytest.approx(_tangent_oracle(s, e, 10.0), abs=1e-6)


def test_dubins_endpoints_and_curvature():
    rng = np.random.default_rng(8)
    for _ in range(200):
        s = Pose.make(*rng.uniform(-50, 50, 2), rng.uniform(-3, 3))
        e = Pose.make(*rng.uniform(-50, 50, 2), rng.uniform(-3, 3))
        p = dubins_shortest(s, e, 10.0)
        assert np.allclose(p.pose_at(0.0), s, atol=1e-9)
        end = p.pose_at(p.length)
        assert math.hypot(end.x - e.x, end.y - e.y) < 1e-6
        assert abs(wrap_angle(end.theta - e.theta)) < 1e-6
        assert max(abs(k) for k in p.curvatures()) <= 1 / 10.0 + 1e-12
        assert p.length >= math.hypot(e.x - s.x, e.y - s.y) - 1e-9
        assert p.word in WORDS


@settings(max_examples=100, deadline=None)
@given(st.floats(-60, 60), st.floats(-60, 60), st.floats(-3.14, 3.14), st.floats(-60, 60),
       st.floats(-60, 60), st.floats(-3.14, 3.14), st.floats(-100, 100), st.floats(-100, 100),
       st.floats(-3.14, 3.14))
def test_dubins_rigid_invariance(x0, y0, t0, x1, y1, t1, tx, ty, rot):
    s, e = Pose.make(x0, y0, t0), Pose.make(x1, y1, t1)
    c, sn = math.cos(rot), math.sin(rot)

    def move(p):
        return Pose.make(c * p.x - sn * p.y + tx, sn * p.x + c * p.y + ty, p.theta + rot)

    a = dubins_shortest(s, e, 10.0).length
    b = dubins_shortest(move(s), move(e), 10.0).length
    assert a == pytest.approx(b, abs=1e-6)


def test_each_feasible_word_reaches_the_goal():
    rng = np.random.default_rng(3)
    for _ in range(100):
        s = Pose.make(*rng.uniform(-30, 30, 2), rng.uniform(-3, 3))
        e = Pose.make(*rng.uniform(-30, 30, 2), rng.uniform(-3, 3))
        for w in WORDS:
            prm = dubins_word(s, e, 10.0, w)
            if prm is None:
                continue
            p = DubinsPath(s, e, w, tuple(10.0 * v for v in prm), 10.0)
            end = p.pose_at(p.length)
            assert math.hypot(end.x - e.x, end.y - e.y) < 1e-6


def test_sample_straight_path():
    p = straight_path(Pose(0, 0, 0), 10.0, 10.0)
    poses = sample_path(p, 1.0)
    assert len(poses) == 11
    assert np.allclose([q.x for q in poses], np.arange(11))
    with pytest.raises(ValueError):
        sample_path(p, 0.0)


def test_sampled_headings_reintegrate():
    p = dubins_shortest(Pose(0, 0, 0), Pose(30, 25, 2.0), 10.0)
    ds = 0.05
    poses = sample_path(p, ds)
    end = poses[-1]
    assert math.hypot(end.x - p.end.x, end.y - p.end.y) < 1e-6
    x, y = poses[0].x, poses[0].y
    for a, b in zip(poses[:-1], poses[1:]):
        step = math.hypot(b.x - a.x, b.y - a.y)
        mid = a.theta + wrap_angle(b.theta - a.theta) / 2
        x += step * math.cos(mid)
        y += step * math.sin(mid)
        assert abs(wrap_angle(b.theta - a.theta)) <= ds / 10.0 + 1e-9
    bound = len(poses) * ds**2 / 10.0
    assert math.hypot(x - end.x, y - end.y) <= bound


def test_trajectory_log(tmp_path):
    b = PoseBelief(Pose(1, 2, 0.5), np.diag([0.1, 0.2, 0.01]))
    write_trajectory_log([(0.05, Pose(1.1, 2.0, 0.5), b)], tmp_path / "t.csv")
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0] == ["t", "x_true", "y_true", "theta_true", "x_bel", "y_bel", "theta_bel",
                       "cov_xx", "cov_xy", "cov_yy"]
    assert float(rows[1][8]) == 0.0 and float(rows[1][9]) == 0.2
