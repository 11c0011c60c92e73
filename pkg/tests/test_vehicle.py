from __future__ import annotations

import math

from hypothesis import given, settings
from hypothesis import strategies as st

from drive2d.geometry import Pose, Vec2
from drive2d.vehicle import (
    Action,
    ControlSignal,
    VehicleParams,
    VehicleState,
    map_action,
    step_dynamics,
)
from .oracles import integrate_unicycle_fine

P = VehicleParams()


def _rest(x=0.0, y=0.0, h=0.0, v=0.0):
    return VehicleState(pose=Pose(Vec2(x, y), h), speed=v)


# ---------------------------------------------------------------------------
# control mapping
# ---------------------------------------------------------------------------


def test_map_action_half_steer_full_throttle():
    u = map_action(Action(0.5, 1.0))
    assert u == ControlSignal(20.0, 460.0, 0.0)


def test_map_action_zero():
    assert map_action(Action(0.0, 0.0)) == ControlSignal(0.0, 0.0, 0.0)


def test_map_action_full_left_half_brake():
    u = map_action(Action(-1.0, -0.5))
    assert u.u_s == -40.0
    assert u.u_a == 0.0
    assert math.isclose(u.u_b, 177.5)


def test_action_clamps_on_ingestion():
    a = Action(3.0, -7.0)
    assert a.a1 == 1.0 and a.a2 == -1.0


@given(a1=st.floats(-1, 1), a2=st.floats(-1, 1))
def test_map_action_odd_in_steering(a1, a2):
    assert map_action(Action(-a1, a2)).u_s == -map_action(Action(a1, a2)).u_s


def test_engine_and_brake_mutually_exclusive():
    for a2 in (-1.0, -0.3, 0.0, 0.4, 1.0):
        u = map_action(Action(0.0, a2))
        assert u.u_a >= 0.0 and u.u_b >= 0.0
        assert u.u_a == 0.0 or u.u_b == 0.0


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------


def test_rest_with_zero_control_stays_put():
    s0 = _rest()
    s1 = step_dynamics(s0, ControlSignal(0, 0, 0), P)
    assert s1.pose.position.dist(s0.pose.position) == 0.0
    assert s1.speed == 0.0


def test_full_throttle_monotonic_up_to_vmax():
    s = _rest()
    u = map_action(Action(0.0, 1.0))
    speeds = [0.0]
    for _ in range(100):  # 10 s
        s = step_dynamics(s, u, P)
        speeds.append(s.speed)
    assert all(b > a or b == P.v_max for a, b in zip(speeds, speeds[1:]))
    assert s.speed <= P.v_max + 1e-12
    assert s.pose.position.y == 0.0


def test_coasting_speed_non_increasing():
    s = _rest(v=20.0)
    u = ControlSignal(0, 0, 0)
    prev = s.speed
    for _ in range(50):
        s = step_dynamics(s, u, P)
        assert s.speed <= prev
        prev = s.speed


def test_braking_stops_the_car():
    s = _rest(v=30.0)
    u = map_action(Action(0.0, -1.0))
    for _ in range(200):
        s = step_dynamics(s, u, P)
    assert s.speed == 0.0


def test_full_revolution_closes_within_tolerance():
    # radius = wheelbase / tan(10 deg); drag disabled so speed stays 5 m/s
    params = VehicleParams(drag=0.0)
    steer = math.radians(10.0)
    radius = params.wheelbase / math.tan(steer)
    period = 2 * math.pi * radius / 5.0
    s = _rest(v=5.0)
    u = ControlSignal(10.0, 0.0, 0.0)
    remaining = period
    while remaining > 1e-12:
        dt = min(0.1, remaining)
        s = step_dynamics(s, u, params, dt=dt)
        remaining -= dt
    assert s.pose.position.dist(Vec2(0, 0)) < 0.1
    # fine-step oracle agrees on the end point
    ox, oy, _ = integrate_unicycle_fine(0, 0, 0, 5.0, steer, params.wheelbase, period, 2_000_000)
    assert s.pose.position.dist(Vec2(ox, oy)) < 5e-3


def test_substep_refinement_converges():
    # halving the physics substep must barely move the 0.1 s pose update
    s = _rest(v=30.0)
    u = ControlSignal(15.0, 200.0, 0.0)
    coarse = step_dynamics(s, u, P, dt=0.1)
    halved = step_dynamics(step_dynamics(s, u, P, dt=0.05), u, P, dt=0.05)
    assert coarse.pose.position.dist(halved.pose.position) < 1e-3


def test_friction_caps_lateral_acceleration():
    params = VehicleParams(friction=0.6, drag=0.0)
    v = 30.0
    s = _rest(v=v)
    u = ControlSignal(40.0, 0.0, 0.0)
    s1 = step_dynamics(s, u, params)
    # curvature implied by the heading change must respect a_lat <= mu g
    dth = abs(s1.pose.heading - s.pose.heading)
    kappa = dth / (v * 0.1)
    assert v * v * kappa <= params.friction * 9.81 * 1.001


def test_heading_stays_normalized():
    s = _rest(v=10.0)
    u = ControlSignal(35.0, 100.0, 0.0)
    for _ in range(500):
        s = step_dynamics(s, u, P)
        assert -math.pi < s.pose.heading <= math.pi


@settings(max_examples=60, deadline=None)
@given(
    v=st.floats(0.0, 33.0),
    steer=st.floats(-40.0, 40.0),
    a2=st.floats(-1.0, 1.0),
)
def test_speed_always_in_bounds(v, steer, a2):
    s = _rest(v=v)
    u = map_action(Action(steer / 40.0, a2))
    for _ in range(5):
        s = step_dynamics(s, u, P)
    assert 0.0 <= s.speed <= P.v_max
