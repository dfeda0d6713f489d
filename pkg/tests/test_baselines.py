import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bathyplan.baselines import (LawnmowerSpec, coverage_fraction, lawnmower_path, myopic_plan,
                                 pattern_length, track_offsets)
from bathyplan.planner import PlannerConfig, flat_field, plan_next
from bathyplan.sensor import SensorConfig, swath_width

from fields import EXTENT, gauss, start_belief, two_lobe_config, two_lobe_field

SENSOR = SensorConfig()


def straight_legs(legs):
    return [leg for leg in legs if all(k == 0 for k, p in zip(leg.curvatures(), leg.segment_params)
                                       if p > 0)]


def raster_cover(offsets, width, swath, res=0.5):
    """Fraction of across-track raster cells within half a swath of some track."""
    c = (np.arange(int(math.ceil(width / res))) + 0.5) * res
    return float(np.mean(np.any(np.abs(c[:, None] - np.asarray(offsets)[None]) <= swath / 2, axis=1)))


def min_tracks_oracle(width, spacing, swath):
    for n in range(1, 1000):
        offs = width / 2 + (np.arange(n) - (n - 1) / 2) * spacing
        if raster_cover(offs, width, swath) >= 0.999:
            return n
    raise AssertionError


def test_spacing_36m():
    legs = lawnmower_path((0, 0, 200, 200), 20.0, SENSOR, 0.10)
    tracks = straight_legs(legs)
    ys = sorted(t.start.y for t in tracks)
    assert np.allclose(np.diff(ys), 36.0)
    assert swath_width(20.0, SENSOR.opening_angle) - 36.0 == pytest.approx(0.1 * 40.0)


@pytest.mark.parametrize("area", [(0, 0, 200, 200), (0, 0, 300, 120), (-50, 10, 40, 400),
                                  (0, 0, 500, 33)])
def test_track_count_matches_raster_oracle(area):
    legs = lawnmower_path(area, 20.0, SENSOR, 0.10)
    tracks = straight_legs(legs)
    width = min(area[2] - area[0], area[3] - area[1])
    w = swath_width(20.0, SENSOR.opening_angle)
    expected = 1 if w >= width else min_tracks_oracle(width, 0.9 * w, w)
    assert len(tracks) == expected
    assert coverage_fraction(legs, area, w, 1.0) >= 0.999


def test_single_centreline_track():
    legs = lawnmower_path((0, 0, 200, 30), 20.0, SENSOR)
    assert len(legs) == 1
    assert legs[0].start.y == pytest.approx(15.0) and legs[0].length == pytest.approx(200.0)


@pytest.mark.parametrize("corner", ["sw", "se", "nw", "ne"])
def test_entry_corner_and_boustrophedon(corner):
    area = (0, 0, 200, 150)
    legs = lawnmower_path(area, 20.0, SENSOR, entry_corner=corner)
    s = legs[0].start
    assert (s.x < 100) == (corner[1] == "w") and (s.y < 75) == (corner[0] == "s")
    tracks = straight_legs(legs)
    headings = [round(math.cos(t.start.theta)) for t in tracks]
    assert all(a == -b for a, b in zip(headings, headings[1:]))
    for a, b in zip(legs, legs[1:]):
        assert np.allclose(a.end.xy, b.start.xy, atol=1e-6)
        assert abs(math.remainder(a.end.theta - b.start.theta, 2 * math.pi)) < 1e-6


def test_deterministic_and_length():
    a = lawnmower_path((0, 0, 200, 200), 20.0, SENSOR)
    b = lawnmower_path((0, 0, 200, 200), 20.0, SENSOR)
    assert [leg.segment_params for leg in a] == [leg.segment_params for leg in b]
    assert len(a) == 11
    assert pattern_length(a) == pytest.approx(sum(leg.length for leg in a))
    assert pattern_length(a) > 6 * 200


@settings(max_examples=30, deadline=None)
@given(st.floats(40, 400), st.floats(40, 400), st.floats(8, 40), st.floats(0.0, 0.5))
def test_coverage_and_overlap(w, h, depth, overlap):
    area = (0.0, 0.0, w, h)
    legs = lawnmower_path(area, depth, SENSOR, overlap)
    sw = swath_width(depth, SENSOR.opening_angle)
    assert coverage_fraction(legs, area, sw, 1.0) >= 0.999
    tracks = straight_legs(legs)
    along_x = w >= h
    offs = sorted(t.start.y if along_x else t.start.x for t in tracks)
    if len(offs) > 1:
        assert np.allclose(sw - np.diff(offs), overlap * sw, atol=1.0)


def test_spec_validation():
    with pytest.raises(ValueError):
        LawnmowerSpec((0, 0, 10, 10), 50.0, 40.0)
    with pytest.raises(ValueError):
        LawnmowerSpec((0, 0, -1, 10), 5.0, 40.0)
    with pytest.raises(ValueError):
        LawnmowerSpec((0, 0, 10, 10), 5.0, 40.0, entry_corner="north")
    with pytest.raises(ValueError):
        lawnmower_path((0, 0, 100, 100), 20.0, SENSOR, overlap_fraction=1.0)
    assert len(track_offsets(100.0, 36.0, 40.0)) == 3


def test_myopic_equals_ladder_rung():
    field, belief = two_lobe_field(), start_belief()
    cfg = two_lobe_config(inject_flat_field=True)
    ladder = plan_next(field, belief, cfg, np.random.default_rng(21))
    mine = myopic_plan(field, belief, cfg, np.random.default_rng(21))
    assert ladder.tag == mine.tag == "myopic_fallback"
    assert np.array_equal(ladder.viewpoint, mine.viewpoint)
    assert ladder.path.segment_params == mine.path.segment_params


def test_myopic_single_lobe():
    c = np.array([140.0, 120.0])
    field = type(two_lobe_field())(lambda X: np.zeros(len(np.atleast_2d(X))),
                                   lambda X: 0.05 + gauss(np.atleast_2d(X), c, 1.0, 10.0))
    cfg = PlannerConfig(extent=EXTENT)
    grid = np.stack(np.meshgrid(np.arange(0, 301, 2.0), np.arange(0, 301, 2.0)), -1).reshape(-1, 2)
    grid = grid[np.hypot(*(grid - [120.0, 140.0]).T) <= cfg.horizon_radius]
    argmax = grid[np.argmax(field.predict(grid)[1])]
    belief = start_belief()
    belief = type(belief)(type(belief.mean)(120.0, 140.0, 0.0), belief.cov)
    r = myopic_plan(field, belief, cfg, np.random.default_rng(0))
    assert r.tag == "myopic_fallback"
    assert np.hypot(*(r.viewpoint - argmax)) <= 10.0


def test_myopic_flat_field_random():
    r = myopic_plan(flat_field(-20.0, 1.0), start_belief(), two_lobe_config(), np.random.default_rng(0))
    assert r.tag == "random_fallback"
