"""Planar primitives: vectors, poses, lane geometry, Frenet projection,
segment intersection, and oriented-rectangle overlap.

Conventions used throughout the package:
  * world frame is x-east / y-north, angles in radians, CCW positive
  * headings are normalized to (-pi, pi]
  * lateral Frenet offset d is positive to the LEFT of the travel direction
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TAU = math.tau

# Tolerances for intersection predicates. Docking seams reproduce shared
# corner points only up to float round-off, so exact predicates would see
# phantom crossings there.
_EPS_ORIENT = 1e-7
_EPS_POINT = 1e-6


class DegenerateProjectionError(ValueError):
    """Point has no well-defined projection (e.g. the center of an arc)."""


def normalize_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.remainder(angle, TAU)
    if a <= -math.pi:
        return math.pi
    return a


@dataclass(frozen=True)
class Vec2:
    """Immutable 2D vector."""

    x: float
    y: float

    def __add__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.x + other.x, self.y + other.y)

    def __sub__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.x - other.x, self.y - other.y)

    def scaled(self, k: float) -> "Vec2":
        return Vec2(self.x * k, self.y * k)

    def dot(self, other: "Vec2") -> float:
        return self.x * other.x + self.y * other.y

    def cross(self, other: "Vec2") -> float:
        return self.x * other.y - self.y * other.x

    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def dist(self, other: "Vec2") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def rotated(self, angle: float) -> "Vec2":
        c, s = math.cos(angle), math.sin(angle)
        return Vec2(c * self.x - s * self.y, s * self.x + c * self.y)

    def angle(self) -> float:
        return math.atan2(self.y, self.x)


def unit(angle: float) -> Vec2:
    """Unit vector at the given angle."""
    return Vec2(math.cos(angle), math.sin(angle))


@dataclass(frozen=True)
class Pose:
    """Position plus heading; heading is normalized on construction."""

    position: Vec2
    heading: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "heading", normalize_angle(self.heading))

    def to_world(self, local: Vec2) -> Vec2:
        return self.position + local.rotated(self.heading)

    def to_local(self, world: Vec2) -> Vec2:
        return (world - self.position).rotated(-self.heading)

    def forward(self) -> Vec2:
        return unit(self.heading)

    def left(self) -> Vec2:
        return unit(self.heading + math.pi / 2)


@dataclass(frozen=True)
class FrenetCoord:
    """Longitudinal position s along a lane and signed lateral offset d."""

    s: float
    d: float


@dataclass(frozen=True)
class StraightSegment:
    """Straight lane centerline from start to end."""

    start: Vec2
    end: Vec2
    width: float = 3.5

    def transformed(self, pose: Pose) -> "StraightSegment":
        return StraightSegment(pose.to_world(self.start), pose.to_world(self.end), self.width)


@dataclass(frozen=True)
class CircularArc:
    """Circular lane centerline.

    The arc starts at angle start_angle (measured from the center) and sweeps
    by the signed angle sweep; positive sweep is counter-clockwise travel.
    """

    center: Vec2
    radius: float
    start_angle: float
    sweep: float
    width: float = 3.5

    def transformed(self, pose: Pose) -> "CircularArc":
        return CircularArc(
            pose.to_world(self.center),
            self.radius,
            normalize_angle(self.start_angle + pose.heading),
            self.sweep,
            self.width,
        )


LaneGeometry = StraightSegment | CircularArc


def lane_length(lane: LaneGeometry) -> float:
    """Arc length of a lane centerline."""
    if isinstance(lane, StraightSegment):
        return lane.start.dist(lane.end)
    return lane.radius * abs(lane.sweep)


def lane_point_at(lane: LaneGeometry, s: float, d: float = 0.0) -> Vec2:
    """World point at longitudinal position s and lateral offset d (left+)."""
    if isinstance(lane, StraightSegment):
        length = lane_length(lane)
        fwd = (lane.end - lane.start).scaled(1.0 / length)
        left = Vec2(-fwd.y, fwd.x)
        return lane.start + fwd.scaled(s) + left.scaled(d)
    sign = 1.0 if lane.sweep >= 0 else -1.0
    phi = lane.start_angle + sign * s / lane.radius
    # CCW travel keeps the center on the left, so +d moves toward the center.
    r = lane.radius - sign * d
    return lane.center + unit(phi).scaled(r)


def lane_heading_at(lane: LaneGeometry, s: float) -> float:
    """Tangent heading of the centerline at s."""
    if isinstance(lane, StraightSegment):
        return (lane.end - lane.start).angle()
    sign = 1.0 if lane.sweep >= 0 else -1.0
    phi = lane.start_angle + sign * s / lane.radius
    return normalize_angle(phi + sign * math.pi / 2)


def lane_curvature(lane: LaneGeometry) -> float:
    """Signed curvature: positive bends left, zero for straights."""
    if isinstance(lane, StraightSegment):
        return 0.0
    sign = 1.0 if lane.sweep >= 0 else -1.0
    return sign / lane.radius


def lane_end_points(lane: LaneGeometry) -> tuple[Vec2, Vec2]:
    """Start and end points of the centerline."""
    if isinstance(lane, StraightSegment):
        return lane.start, lane.end
    return lane_point_at(lane, 0.0), lane_point_at(lane, lane_length(lane))


def frenet_project(lane: LaneGeometry, point: Vec2) -> FrenetCoord:
    """Project a world point onto a lane.

    s is clamped to [0, length]; d is the signed perpendicular offset from
    the centerline at the foot point, positive to the left of travel.
    """
    if isinstance(lane, StraightSegment):
        length = lane_length(lane)
        fwd = (lane.end - lane.start).scaled(1.0 / length)
        rel = point - lane.start
        s = min(max(rel.dot(fwd), 0.0), length)
        d = fwd.cross(rel)
        return FrenetCoord(s, d)

    rel = point - lane.center
    rho = rel.norm()
    if rho < 1e-12:
        raise DegenerateProjectionError("point coincides with arc center")
    sign = 1.0 if lane.sweep >= 0 else -1.0
    length = lane_length(lane)
    # Angular offset from the arc start, unwrapped along the travel direction.
    delta = (sign * (rel.angle() - lane.start_angle)) % TAU
    s = delta * lane.radius
    if s > length:
        # Off the arc: clamp to whichever endpoint is angularly closer.
        s = length if (delta - abs(lane.sweep)) <= (TAU - delta) else 0.0
    d = sign * (lane.radius - rho)
    return FrenetCoord(s, d)


def _orient(a: Vec2, b: Vec2, c: Vec2) -> float:
    return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)


def segments_intersect(a: tuple[Vec2, Vec2], b: tuple[Vec2, Vec2]) -> bool:
    """True iff the interiors of two segments intersect.

    Proper crossings and collinear overlaps of positive length count; contact
    at a single point that is an endpoint of either segment does not, so
    chains and end-to-end docked boundaries do not self-report.
    """
    p1, p2 = a
    q1, q2 = b
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    e = _EPS_ORIENT
    if ((d1 > e and d2 < -e) or (d1 < -e and d2 > e)) and (
        (d3 > e and d4 < -e) or (d3 < -e and d4 > e)
    ):
        return True
    if abs(d1) <= e and abs(d2) <= e and abs(d3) <= e and abs(d4) <= e:
        # Collinear: positive 1D overlap means the interiors meet.
        axis = p2 - p1
        length = axis.norm()
        if length < _EPS_POINT:
            return False
        axis = axis.scaled(1.0 / length)
        t1 = axis.dot(q1 - p1)
        t2 = axis.dot(q2 - p1)
        lo, hi = min(t1, t2), max(t1, t2)
        return min(length, hi) - max(0.0, lo) > _EPS_POINT
    return False


def segment_sets_cross(a: np.ndarray, b: np.ndarray) -> bool:
    """Vectorized segments_intersect over two (N, 4) arrays of x1,y1,x2,y2."""
    if len(a) == 0 or len(b) == 0:
        return False
    p1 = a[:, None, 0:2]
    p2 = a[:, None, 2:4]
    q1 = b[None, :, 0:2]
    q2 = b[None, :, 2:4]

    def orient(o, u, v):
        return (u[..., 0] - o[..., 0]) * (v[..., 1] - o[..., 1]) - (
            u[..., 1] - o[..., 1]
        ) * (v[..., 0] - o[..., 0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    e = _EPS_ORIENT
    cross = ((d1 > e) & (d2 < -e) | (d1 < -e) & (d2 > e)) & (
        (d3 > e) & (d4 < -e) | (d3 < -e) & (d4 > e)
    )
    if bool(cross.any()):
        return True

    collinear = (np.abs(d1) <= e) & (np.abs(d2) <= e) & (np.abs(d3) <= e) & (np.abs(d4) <= e)
    if not bool(collinear.any()):
        return False
    ia, ib = np.nonzero(collinear)
    axis = a[ia, 2:4] - a[ia, 0:2]
    length = np.hypot(axis[:, 0], axis[:, 1])
    ok = length > _EPS_POINT
    if not bool(ok.any()):
        return False
    ia, ib, axis, length = ia[ok], ib[ok], axis[ok], length[ok]
    axis = axis / length[:, None]
    r1 = b[ib, 0:2] - a[ia, 0:2]
    r2 = b[ib, 2:4] - a[ia, 0:2]
    t1 = np.einsum("ij,ij->i", axis, r1)
    t2 = np.einsum("ij,ij->i", axis, r2)
    lo = np.minimum(t1, t2)
    hi = np.maximum(t1, t2)
    overlap = np.minimum(length, hi) - np.maximum(0.0, lo)
    return bool((overlap > _EPS_POINT).any())


def discretize(lane_or_chain, chord_error: float = 0.1) -> np.ndarray:
    """Polyline vertices approximating a primitive within a max chord error."""
    prim = lane_or_chain
    if isinstance(prim, StraightSegment):
        return np.array([[prim.start.x, prim.start.y], [prim.end.x, prim.end.y]])
    span = abs(prim.sweep)
    if prim.radius <= chord_error:
        step = span
    else:
        step = 2.0 * math.acos(max(-1.0, 1.0 - chord_error / prim.radius))
    n = max(1, math.ceil(span / max(step, 1e-6)))
    sign = 1.0 if prim.sweep >= 0 else -1.0
    angles = prim.start_angle + sign * np.linspace(0.0, span, n + 1)
    return np.stack(
        [prim.center.x + prim.radius * np.cos(angles), prim.center.y + prim.radius * np.sin(angles)],
        axis=1,
    )


def polyline_segments(points: np.ndarray) -> np.ndarray:
    """(N, 2) vertex array -> (N-1, 4) segment array."""
    return np.concatenate([points[:-1], points[1:]], axis=1)


def rect_corners(center: Vec2, heading: float, length: float, width: float) -> np.ndarray:
    """Corners of an oriented rectangle, CCW, as a (4, 2) array."""
    c, s = math.cos(heading), math.sin(heading)
    hl, hw = length / 2.0, width / 2.0
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([center.x, center.y])


def rects_overlap(a: np.ndarray, b: np.ndarray) -> bool:
    """Separating-axis overlap test for two (4, 2) corner arrays."""
    for corners in (a, b):
        for i in range(2):
            edge = corners[i + 1] - corners[i]
            axis = np.array([-edge[1], edge[0]])
            pa = a @ axis
            pb = b @ axis
            if pa.max() < pb.min() or pb.max() < pa.min():
                return False
    return True
