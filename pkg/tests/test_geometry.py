from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drive2d.geometry import (
    CircularArc,
    Pose,
    StraightSegment,
    Vec2,
    frenet_project,
    lane_end_points,
    lane_heading_at,
    lane_length,
    lane_point_at,
    normalize_angle,
    rect_corners,
    rects_overlap,
    segment_sets_cross,
    segments_intersect,
)
from .oracles import rects_overlap_shapely, segments_cross_shapely


def test_normalize_angle_range():
    for a in (-7.0, -math.pi, 0.0, math.pi, 7.0, 100.0):
        n = normalize_angle(a)
        assert -math.pi < n <= math.pi
        assert math.isclose(math.sin(n), math.sin(a), abs_tol=1e-12)
        assert math.isclose(math.cos(n), math.cos(a), abs_tol=1e-12)


def test_lane_length_straight():
    seg = StraightSegment(Vec2(0, 0), Vec2(10, 0), 3.5)
    assert lane_length(seg) == 10.0


def test_lane_length_arc_quarter():
    arc = CircularArc(Vec2(0, 0), 10.0, 0.0, math.pi / 2, 3.5)
    assert math.isclose(lane_length(arc), 15.707963267948966, rel_tol=1e-12)


def test_lane_length_arc_sign_independent():
    arc = CircularArc(Vec2(0, 0), 5.0, 0.0, -math.pi, 3.5)
    assert math.isclose(lane_length(arc), 15.707963267948966, rel_tol=1e-12)


def test_frenet_straight_axis_aligned():
    seg = StraightSegment(Vec2(0, 0), Vec2(10, 0), 3.5)
    fr = frenet_project(seg, Vec2(3, 1))
    assert math.isclose(fr.s, 3.0, abs_tol=1e-12)
    assert math.isclose(fr.d, 1.0, abs_tol=1e-12)


def test_frenet_straight_clamps_before_start():
    seg = StraightSegment(Vec2(0, 0), Vec2(10, 0), 3.5)
    fr = frenet_project(seg, Vec2(-2, 0))
    assert fr.s == 0.0
    assert math.isclose(fr.d, 0.0, abs_tol=1e-12)


def test_frenet_arc_midpoint():
    arc = CircularArc(Vec2(0, 0), 10.0, 0.0, math.pi / 2, 3.5)
    p = Vec2(10 * math.cos(math.pi / 4), 10 * math.sin(math.pi / 4))
    fr = frenet_project(arc, p)
    assert math.isclose(fr.s, 7.853981633974483, rel_tol=1e-9)
    assert abs(fr.d) < 1e-9


def test_point_at_straight():
    seg = StraightSegment(Vec2(0, 0), Vec2(10, 0), 3.5)
    p = lane_point_at(seg, 3.0)
    assert math.isclose(p.x, 3.0) and abs(p.y) < 1e-12
    q = lane_point_at(seg, 3.0, 1.0)
    assert math.isclose(q.y, 1.0)  # positive lateral offset is to the left


def test_point_at_arc_inverse_of_projection():
    arc = CircularArc(Vec2(0, 0), 10.0, 0.0, math.pi / 2, 3.5)
    p = lane_point_at(arc, 7.853981633974483)
    assert math.isclose(p.x, 10 * math.cos(math.pi / 4), rel_tol=1e-9)
    assert math.isclose(p.y, 10 * math.sin(math.pi / 4), rel_tol=1e-9)


@settings(max_examples=200, deadline=None)
@given(
    s=st.floats(0.0, 15.707),
    d=st.floats(-3.0, 3.0),
    cw=st.booleans(),
)
def test_frenet_round_trip_on_arc(s, d, cw):
    sweep = math.pi / 2 if not cw else -math.pi / 2
    arc = CircularArc(Vec2(2.0, -1.0), 10.0, 0.3, sweep, 3.5)
    p = lane_point_at(arc, s, d)
    fr = frenet_project(arc, p)
    assert math.isclose(fr.s, s, abs_tol=1e-6)
    assert math.isclose(fr.d, d, abs_tol=1e-6)


@settings(max_examples=200, deadline=None)
@given(
    s=st.floats(0.0, 25.0),
    d=st.floats(-3.0, 3.0),
    ang=st.floats(-3.1, 3.1),
)
def test_frenet_round_trip_on_straight(s, d, ang):
    a = Vec2(1.0, 2.0)
    b = Vec2(1.0 + 25.0 * math.cos(ang), 2.0 + 25.0 * math.sin(ang))
    seg = StraightSegment(a, b, 3.5)
    p = lane_point_at(seg, s, d)
    fr = frenet_project(seg, p)
    assert math.isclose(fr.s, s, abs_tol=1e-6)
    assert math.isclose(fr.d, d, abs_tol=1e-6)


def test_heading_along_arc_is_tangent():
    arc = CircularArc(Vec2(0, 0), 10.0, 0.0, math.pi / 2, 3.5)
    h0 = lane_heading_at(arc, 0.0)
    assert math.isclose(h0, math.pi / 2, abs_tol=1e-12)
    start, end = lane_end_points(arc)
    assert math.isclose(start.x, 10.0) and abs(start.y) < 1e-12
    assert abs(end.x) < 1e-9 and math.isclose(end.y, 10.0)


def test_segments_perpendicular_cross():
    assert segments_intersect(
        (Vec2(0, 0), Vec2(1, 0)), (Vec2(0.5, -1), Vec2(0.5, 1))
    )


def test_segments_parallel_disjoint():
    assert not segments_intersect(
        (Vec2(0, 0), Vec2(1, 0)), (Vec2(0, 1), Vec2(1, 1))
    )


def test_segments_endpoint_touch_does_not_count():
    assert not segments_intersect(
        (Vec2(0, 0), Vec2(1, 0)), (Vec2(1, 0), Vec2(2, 0))
    )


def test_segments_t_touch_does_not_count():
    assert not segments_intersect(
        (Vec2(0, 0), Vec2(2, 0)), (Vec2(1, 0), Vec2(1, 5))
    )


def test_segments_collinear_overlap_counts():
    assert segments_intersect(
        (Vec2(0, 0), Vec2(2, 0)), (Vec2(1, 0), Vec2(3, 0))
    )


def test_segments_match_shapely_oracle():
    import numpy as np

    rng = np.random.default_rng(4)
    agree = 0
    for _ in range(500):
        pts = rng.uniform(-5, 5, size=8)
        a1, a2 = Vec2(pts[0], pts[1]), Vec2(pts[2], pts[3])
        b1, b2 = Vec2(pts[4], pts[5]), Vec2(pts[6], pts[7])
        got = segments_intersect((a1, a2), (b1, b2))
        want = segments_cross_shapely(a1, a2, b1, b2)
        assert got == want, f"{a1},{a2} vs {b1},{b2}: got {got} want {want}"
        agree += 1
    assert agree == 500


def test_segment_sets_cross_matches_scalar():
    import numpy as np

    rng = np.random.default_rng(11)
    a = rng.uniform(-5, 5, size=(6, 4))
    b = rng.uniform(-5, 5, size=(7, 4))
    want = any(
        segments_intersect(
            (Vec2(r[0], r[1]), Vec2(r[2], r[3])),
            (Vec2(q[0], q[1]), Vec2(q[2], q[3])),
        )
        for r in a
        for q in b
    )
    assert segment_sets_cross(a, b) == want


def test_rects_identical_overlap():
    c = rect_corners(Vec2(0, 0), 0.3, 4.5, 2.0)
    assert rects_overlap(c, c)


def test_rects_far_apart():
    a = rect_corners(Vec2(0, 0), 0.0, 4.5, 2.0)
    b = rect_corners(Vec2(100, 0), 0.0, 4.5, 2.0)
    assert not rects_overlap(a, b)


def test_rects_match_shapely_oracle():
    import numpy as np

    rng = np.random.default_rng(9)
    for _ in range(300):
        x, y, h = rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-3, 3)
        a = rect_corners(Vec2(0, 0), rng.uniform(-3, 3), 4.5, 2.0)
        b = rect_corners(Vec2(x, y), h, 4.5, 2.0)
        assert rects_overlap(a, b) == rects_overlap_shapely(a, b)


def test_pose_round_trip():
    pose = Pose(Vec2(3, -2), 0.7)
    p = Vec2(1.5, 0.25)
    assert pose.to_local(pose.to_world(p)).dist(p) < 1e-12
