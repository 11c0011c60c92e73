"""Observation assembly: lidar distances, ego features, navigation hints,
and nearest-vehicle summaries, packed into one fixed-length vector.

All features are expressed in the vehicle frame so the observation is
invariant under rigid motions of the whole scene.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Pose, Vec2, discretize, polyline_segments, rect_corners
from .pgmap import RoadNetwork
from .vehicle import VehicleParams

N_RAYS = 240
LIDAR_RANGE = 50.0
K_NEAREST = 4
OBS_SIZE = N_RAYS + 6 + 4 + 4 * K_NEAREST

_RAY_ANGLES = 2.0 * math.pi * np.arange(N_RAYS) / N_RAYS


def build_walls(net: RoadNetwork) -> np.ndarray:
    """Static obstacle segments for a map: every solid road edge plus a cap
    across each unused road mouth. The destination socket stays open so the
    goal reads as free space; the episode entry is capped since the road
    physically ends there."""
    parts = [blk.footprint_segments() for blk in net.blocks]
    dest = net.destination
    caps = []
    mouths = [net.blocks[0].entry_socket] if net.blocks else []
    mouths += [s for s in net.free_sockets() if dest is None or s.id != dest.id]
    for sock in mouths:
        half = sock.lanes * net.config.lane_width / 2.0
        left = Vec2(-math.sin(sock.pose.heading), math.cos(sock.pose.heading))
        a = sock.pose.position + left.scaled(half)
        b = sock.pose.position - left.scaled(half)
        caps.append(np.array([[a.x, a.y, b.x, b.y]]))
    parts.extend(caps)
    if not parts:
        return np.empty((0, 4))
    return np.concatenate(parts, axis=0)


def _rects_to_segments(rects: list[np.ndarray]) -> np.ndarray:
    if not rects:
        return np.empty((0, 4))
    out = np.empty((4 * len(rects), 4))
    for k, c in enumerate(rects):
        nxt = np.roll(c, -1, axis=0)
        out[4 * k : 4 * k + 4, 0:2] = c
        out[4 * k : 4 * k + 4, 2:4] = nxt
    return out


def lidar_scan(
    origin: Vec2,
    heading: float,
    walls: np.ndarray,
    rects: list[np.ndarray] = (),
) -> np.ndarray:
    """240 normalized ray distances, ray 0 along the heading, CCW order."""
    segs = [_cull(walls, origin)]
    body = _rects_to_segments(list(rects))
    if len(body):
        segs.append(body)
    segments = np.concatenate(segs, axis=0) if len(segs) > 1 else segs[0]
    if segments.shape[0] == 0:
        return np.ones(N_RAYS)
    dirs = np.empty((N_RAYS, 2))
    np.cos(_RAY_ANGLES + heading, out=dirs[:, 0])
    np.sin(_RAY_ANGLES + heading, out=dirs[:, 1])

    p = segments[:, 0:2]
    e = segments[:, 2:4] - p
    r = p - np.array([origin.x, origin.y])
    # o + t*dir = p + u*e  =>  t = (r x e)/(dir x e), u = (dir x r)/(dir x e)
    denom = np.outer(dirs[:, 0], e[:, 1]) - np.outer(dirs[:, 1], e[:, 0])
    t_num = r[:, 0] * e[:, 1] - r[:, 1] * e[:, 0]
    u_num = np.outer(dirs[:, 1], r[:, 0]) - np.outer(dirs[:, 0], r[:, 1])
    with np.errstate(divide="ignore", invalid="ignore"):
        t = t_num[None, :] / denom
        u = u_num / denom
    valid = (np.abs(denom) > 1e-12) & (t > 1e-9) & (u >= -1e-9) & (u <= 1 + 1e-9)
    t = np.where(valid, t, np.inf)
    hit = t.min(axis=1)
    return np.minimum(hit, LIDAR_RANGE) / LIDAR_RANGE


def _cull(walls: np.ndarray, origin: Vec2) -> np.ndarray:
    """Keep wall segments whose bounding box touches the lidar range box."""
    if walls.shape[0] == 0:
        return walls
    x0 = np.minimum(walls[:, 0], walls[:, 2])
    x1 = np.maximum(walls[:, 0], walls[:, 2])
    y0 = np.minimum(walls[:, 1], walls[:, 3])
    y1 = np.maximum(walls[:, 1], walls[:, 3])
    keep = (
        (x1 >= origin.x - LIDAR_RANGE)
        & (x0 <= origin.x + LIDAR_RANGE)
        & (y1 >= origin.y - LIDAR_RANGE)
        & (y0 <= origin.y + LIDAR_RANGE)
    )
    return walls[keep]


@dataclass(frozen=True)
class LaneContext:
    """Where the vehicle sits relative to its current lane group."""

    lane_heading: float
    lateral: float  # left-positive offset from the lane centerline
    half_width: float  # road half-width of the lane's group


@dataclass(frozen=True)
class NavTarget:
    """Pose of the socket the route leaves the current block through."""

    position: Vec2
    heading: float


def ego_features(
    steering_angle: float,
    speed: float,
    ctx: LaneContext,
    vehicle_heading: float,
    params: VehicleParams,
) -> np.ndarray:
    err = vehicle_heading - ctx.lane_heading
    left = ctx.half_width - ctx.lateral
    right = ctx.half_width + ctx.lateral
    return np.array(
        [
            steering_angle / params.max_steer,
            math.sin(err),
            math.cos(err),
            speed / params.v_max,
            left / ctx.half_width,
            right / ctx.half_width,
        ]
    )


def navigation_features(pose: Pose, target: NavTarget) -> np.ndarray:
    rel = pose.to_local(target.position)
    dh = target.heading - pose.heading
    return np.array(
        [
            rel.x / LIDAR_RANGE,
            rel.y / LIDAR_RANGE,
            math.sin(dh),
            math.cos(dh),
        ]
    )


def nearest_vehicle_features(pose: Pose, others: list[tuple[Pose, float]]) -> np.ndarray:
    """K nearest vehicles as ego-frame offset and relative heading."""
    out = np.zeros(4 * K_NEAREST)
    scored = sorted(
        others, key=lambda item: item[0].position.dist(pose.position)
    )[:K_NEAREST]
    for k, (other, _speed) in enumerate(scored):
        rel = pose.to_local(other.position)
        dh = other.heading - pose.heading
        out[4 * k : 4 * k + 4] = (
            rel.x / LIDAR_RANGE,
            rel.y / LIDAR_RANGE,
            math.sin(dh),
            math.cos(dh),
        )
    return out


def observe(
    pose: Pose,
    steering_angle: float,
    speed: float,
    ctx: LaneContext,
    target: NavTarget,
    walls: np.ndarray,
    others: list[tuple[Pose, float]],
    params: VehicleParams = VehicleParams(),
    obstacles: list[Pose] = (),
) -> np.ndarray:
    """Full observation vector. Obstacles show up on the lidar but are not
    traffic, so they stay out of the nearest-vehicle slots."""
    rects = [
        rect_corners(p.position, p.heading, 4.5, 2.0) for p, _v in others
    ]
    rects += [
        rect_corners(p.position, p.heading, 4.5, 2.0) for p in obstacles
    ]
    parts = [
        lidar_scan(pose.position, pose.heading, walls, rects),
        ego_features(steering_angle, speed, ctx, pose.heading, params),
        navigation_features(pose, target),
        nearest_vehicle_features(pose, others),
    ]
    obs = np.concatenate(parts)
    return np.clip(obs, -1.0, 1.0)
