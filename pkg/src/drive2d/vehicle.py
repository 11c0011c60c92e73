"""Target-vehicle control mapping and kinematic bicycle stepping.

The two-channel normalized action is mapped to steering/engine/brake
signals, then the pose is advanced with a constant-curvature arc per physics
substep. Using the exact arc (rather than a Euler tangent step) keeps long
circular trajectories closed, which matters for curvature-heavy maps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .geometry import Pose, Vec2, normalize_angle

GRAVITY = 9.81
HP_TO_WATT = 745.7
SUBSTEPS = 5


def clamp(v: float, lo: float, hi: float) -> float:
    return lo if v < lo else hi if v > hi else v


@dataclass(frozen=True)
class Action:
    """Normalized two-channel command; both components clamped to [-1, 1]."""

    a1: float = 0.0
    a2: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "a1", clamp(float(self.a1), -1.0, 1.0))
        object.__setattr__(self, "a2", clamp(float(self.a2), -1.0, 1.0))


@dataclass(frozen=True)
class ControlSignal:
    """Steering in degrees plus mutually exclusive engine/brake channels."""

    u_s: float
    u_a: float
    u_b: float


@dataclass(frozen=True)
class VehicleParams:
    wheelbase: float = 2.6
    length: float = 4.5
    width: float = 2.0
    mass: float = 1100.0
    max_engine: float = 460.0  # hp
    max_brake: float = 355.0  # hp
    max_steer_deg: float = 40.0
    v_max: float = 120.0 / 3.6  # m/s
    friction: float = 1.0
    drag: float = 0.05  # linear speed decay, 1/s

    @property
    def max_steer(self) -> float:
        return math.radians(self.max_steer_deg)


@dataclass(frozen=True)
class VehicleState:
    pose: Pose
    speed: float = 0.0
    steering_angle: float = 0.0
    lane_id: str | None = None
    last_a1: float = 0.0


def map_action(a: Action, params: VehicleParams = VehicleParams()) -> ControlSignal:
    """Steering scales to degrees; positive a2 drives, negative brakes."""
    u_s = a.a1 * params.max_steer_deg
    if a.a2 > 0.0:
        return ControlSignal(u_s, a.a2 * params.max_engine, 0.0)
    return ControlSignal(u_s, 0.0, -a.a2 * params.max_brake)


def _accel(u: ControlSignal, v: float, params: VehicleParams) -> float:
    """Longitudinal acceleration from power channels minus linear drag.

    Power converts to force via F = P/v with a 1 m/s floor so launch force
    stays finite.
    """
    v_eff = max(v, 1.0)
    a = -params.drag * v
    if u.u_a > 0.0:
        a += u.u_a * HP_TO_WATT / (params.mass * v_eff)
    if u.u_b > 0.0 and v > 0.0:
        a -= u.u_b * HP_TO_WATT / (params.mass * v_eff)
    return a


def _effective_steer(steer: float, v: float, params: VehicleParams) -> float:
    """Cap lateral acceleration at friction * g by flattening the steer angle."""
    if v < 1e-6:  # cap cannot bind at crawling speed; also avoids underflow
        return steer
    tan_limit = params.friction * GRAVITY * params.wheelbase / (v * v)
    t = math.tan(steer)
    if abs(t) > tan_limit:
        return math.atan(math.copysign(tan_limit, t))
    return steer


def _advance(pose: Pose, dist: float, kappa: float) -> Pose:
    """Move along a constant-curvature arc (exact, no tangent drift)."""
    h = pose.heading
    if abs(kappa) < 1e-9:
        return Pose(pose.position + Vec2(math.cos(h), math.sin(h)).scaled(dist), h)
    dth = dist * kappa
    r = 1.0 / kappa
    dx = r * (math.sin(h + dth) - math.sin(h))
    dy = r * (math.cos(h) - math.cos(h + dth))
    return Pose(pose.position + Vec2(dx, dy), normalize_angle(h + dth))


def step_dynamics(
    state: VehicleState,
    u: ControlSignal,
    params: VehicleParams = VehicleParams(),
    dt: float = 0.1,
) -> VehicleState:
    """Advance one control interval in SUBSTEPS equal physics substeps."""
    steer_cmd = clamp(math.radians(u.u_s), -params.max_steer, params.max_steer)
    pose = state.pose
    v = state.speed
    h = dt / SUBSTEPS
    for _ in range(SUBSTEPS):
        v_next = clamp(v + _accel(u, v, params) * h, 0.0, params.v_max)
        v_mid = 0.5 * (v + v_next)
        steer = _effective_steer(steer_cmd, v_mid, params)
        kappa = math.tan(steer) / params.wheelbase
        pose = _advance(pose, v_mid * h, kappa)
        v = v_next
    return replace(state, pose=pose, speed=v, steering_angle=steer_cmd)


def vehicle_corners(pose: Pose, params: VehicleParams = VehicleParams()):
    """Oriented rectangle corners for collision and sensing."""
    from .geometry import rect_corners

    return rect_corners(pose.position, pose.heading, params.length, params.width)
