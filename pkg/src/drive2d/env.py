"""Step/reset driving environment: one controlled vehicle on a procedurally
generated map with scripted traffic, dense shaped reward, and the four
mutually exclusive episode endings.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .geometry import (
    Pose,
    frenet_project,
    lane_heading_at,
    lane_point_at,
    rect_corners,
    rects_overlap,
)
from .pgmap import MapConfig, RoadNetwork, generate_map
from .sensing import LaneContext, NavTarget, build_walls, observe
from .traffic import TrafficConfig, TrafficManager, route
from .vehicle import Action, VehicleParams, VehicleState, map_action, step_dynamics

STEP_DT = 0.1
SUCCESS_RADIUS = 5.0
LANE_HYSTERESIS = 0.5
OBSTACLE_STREAM = 3


class TerminalState(enum.Enum):
    NONE = 0
    MAX_STEP = 1
    OUT_OF_ROAD = 2
    CRASH = 3
    SUCCESS = 4


class EpisodeDoneError(RuntimeError):
    """Raised when step is called on a finished episode."""


@dataclass(frozen=True)
class RewardConfig:
    c1: float = 1.0
    c2: float = 0.1
    c3: float = 0.1
    c4: float = 1.0
    success_reward: float = 20.0
    crash_penalty: float = -10.0
    out_of_road_penalty: float = -5.0
    max_step_reward: float = 0.0

    def terminal_payoff(self, terminal: TerminalState) -> float:
        return {
            TerminalState.SUCCESS: self.success_reward,
            TerminalState.CRASH: self.crash_penalty,
            TerminalState.OUT_OF_ROAD: self.out_of_road_penalty,
            TerminalState.MAX_STEP: self.max_step_reward,
            TerminalState.NONE: 0.0,
        }[terminal]


@dataclass(frozen=True)
class EnvConfig:
    map: MapConfig = field(default_factory=MapConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    network: RoadNetwork | None = None
    max_steps: int = 1500
    safety_mode: bool = False
    obstacle_density: float = 0.0

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if self.obstacle_density < 0:
            raise ValueError("obstacle_density must be nonnegative")


@dataclass
class StepResult:
    obs: np.ndarray
    reward: float
    done: bool
    info: dict


def compute_reward(
    cfg: RewardConfig,
    progress_delta: float,
    speed: float,
    v_max: float,
    steer_delta: float,
    terminal: TerminalState,
) -> tuple[float, dict]:
    """Shaped reward: longitudinal advance, speed bonus, steering-change
    penalty, and the terminal payoff. The terminal step pays only the payoff."""
    if terminal is TerminalState.NONE:
        r_disp = progress_delta
        r_speed = speed / v_max
        r_steering = -abs(steer_delta) * speed / v_max
    else:
        r_disp = 0.0
        r_speed = 0.0
        r_steering = 0.0
    r_term = cfg.terminal_payoff(terminal)
    total = cfg.c1 * r_disp + cfg.c2 * r_speed + cfg.c3 * r_steering + cfg.c4 * r_term
    components = {
        "r_disp": r_disp,
        "r_speed": r_speed,
        "r_steering": r_steering,
        "r_term": r_term,
    }
    return total, components


class DrivingEnv:
    """Single controlled vehicle; traffic and obstacles are part of the world.

    One instance owns one episode at a time. reset(seed) rebuilds the map
    (unless an explicit network is pinned in the config), reallocates
    traffic, and places the controlled vehicle at rest on the first block's
    middle lane, 5 m past the entry line.
    """

    def __init__(self, config: EnvConfig | None = None):
        self.config = config or EnvConfig()
        self.net: RoadNetwork | None = None
        self._done = True
        self._seed: int | None = None

    # -- episode setup ------------------------------------------------------

    def reset(self, seed: int) -> np.ndarray:
        cfg = self.config
        if cfg.network is not None:
            self.net = cfg.network
        elif self.net is None or self._seed != seed:
            self.net = generate_map(cfg.map, seed)
        self._seed = seed
        net = self.net
        self.walls = build_walls(net)
        spawn_lane = self._spawn_lane()
        self.traffic = TrafficManager(
            net,
            cfg.traffic,
            rngmod.make_rng(seed, rngmod.TRAFFIC_STREAM),
            exclude=((spawn_lane.id, 5.0, 10.0),),
        )
        self._place_obstacles(seed)

        pose = self._lane_pose(spawn_lane.id, 5.0)
        self.state = VehicleState(
            pose=pose, speed=0.0, steering_angle=0.0, lane_id=spawn_lane.id
        )
        self._route_lanes, self._route_cum = self._plan_route(spawn_lane)
        self._route_idx = 0
        self._nav_targets = self._socket_targets()
        self._progress = self._route_progress()
        self._prev_a1 = 0.0
        self._steps = 0
        self._done = False
        self._cost_total = 0.0
        return self._observe()

    def _spawn_lane(self):
        entry = set(self.net.blocks[0].entry_socket.lane_nodes)
        lanes = sorted(
            (ln for ln in self.net.blocks[0].lanes if ln.start_node in entry),
            key=lambda ln: ln.index,
        )
        return lanes[(len(lanes) - 1) // 2]

    def _plan_route(self, spawn_lane):
        dest = self.net.destination
        if dest is None:
            raise ValueError("map has no destination socket")
        best = None
        src = self.net.resolve(spawn_lane.start_node)
        for node in dest.lane_nodes:
            try:
                _nodes, lane_ids = route(self.net, src, node)
            except Exception:
                continue
            total = sum(self.net.lane(lid).length for lid in lane_ids)
            if best is None or total < best[0]:
                best = (total, lane_ids)
        if best is None:
            raise ValueError("destination unreachable from spawn")
        lane_ids = best[1]
        cum = [0.0]
        for lid in lane_ids:
            cum.append(cum[-1] + self.net.lane(lid).length)
        return lane_ids, cum

    def _socket_targets(self) -> list[NavTarget]:
        """Per route lane, the socket the route leaves that lane's block by."""
        net = self.net
        dest = net.destination
        sockets = []
        for i, lid in enumerate(self._route_lanes):
            blk_idx = int(lid.split(":")[0][1:])
            exit_node = None
            for nxt in self._route_lanes[i + 1 :]:
                if int(nxt.split(":")[0][1:]) != blk_idx:
                    exit_node = net.resolve(net.lane(nxt).start_node)
                    break
            target = None
            if exit_node is not None:
                for sock in net.blocks[blk_idx].exit_sockets:
                    if exit_node in {net.resolve(n) for n in sock.lane_nodes}:
                        target = sock
                        break
            if target is None:
                target = dest
            sockets.append(NavTarget(target.pose.position, target.pose.heading))
        return sockets

    def _place_obstacles(self, seed: int) -> None:
        self.obstacles: list[Pose] = []
        self._obstacle_occupants: list[tuple] = []
        cfg = self.config
        if not cfg.safety_mode or cfg.obstacle_density <= 0:
            return
        count = int(cfg.obstacle_density * self.net.total_lane_length / 100.0)
        if count == 0:
            return
        rng = rngmod.make_rng(seed, OBSTACLE_STREAM)
        lanes = sorted(self.net.lanes(), key=lambda ln: ln.id)
        for _ in range(count):
            lane = lanes[rngmod.rand_int(rng, 0, len(lanes) - 1)]
            margin = min(5.0, lane.length / 4.0)
            s = rngmod.rand_uniform(rng, margin, lane.length - margin)
            self.obstacles.append(
                Pose(
                    lane_point_at(lane.geom, s),
                    lane_heading_at(lane.geom, s),
                )
            )
            self._obstacle_occupants.append((lane.id, s, 0.0, 2.25))

    # -- frame bookkeeping ---------------------------------------------------

    def _lane_pose(self, lane_id: str, s: float) -> Pose:
        geom = self.net.lane(lane_id).geom
        return Pose(lane_point_at(geom, s), lane_heading_at(geom, s))

    def _route_progress(self) -> float:
        """Longitudinal distance along the planned route.

        The active route lane advances when the projection passes the lane
        end (seam hand-off), or when the next lane tracks the vehicle with a
        clear lateral margin (corner cutting). It never moves backward, so
        loops through a roundabout keep accumulating distance.
        """
        p = self.state.pose.position
        n = len(self._route_lanes)
        while True:
            lane = self.net.lane(self._route_lanes[self._route_idx])
            fr = frenet_project(lane.geom, p)
            if self._route_idx + 1 >= n:
                break
            if fr.s >= lane.length - 1e-9:
                self._route_idx += 1
                continue
            nxt = frenet_project(
                self.net.lane(self._route_lanes[self._route_idx + 1]).geom, p
            )
            if nxt.s > 1e-9 and abs(nxt.d) + LANE_HYSTERESIS < abs(fr.d):
                self._route_idx += 1
                continue
            break
        return self._route_cum[self._route_idx] + fr.s

    def _nearest_lane(self):
        """Globally nearest lane by point distance to the projected foot."""
        p = self.state.pose.position
        best = None
        for lane in self.net.lanes():
            fr = frenet_project(lane.geom, p)
            foot = lane_point_at(lane.geom, fr.s)
            gap = foot.dist(p)
            if best is None or gap < best[0]:
                best = (gap, lane, fr)
        return best[1], best[2]

    def _lane_context(self) -> LaneContext:
        lane = self.net.lane(self._route_lanes[self._route_idx])
        fr = frenet_project(lane.geom, self.state.pose.position)
        return LaneContext(
            lane_heading=lane_heading_at(lane.geom, fr.s),
            lateral=fr.d + lane.road_offset,
            half_width=lane.group_lanes * self.net.config.lane_width / 2.0,
        )

    def _observe(self) -> np.ndarray:
        return observe(
            self.state.pose,
            self.state.steering_angle,
            self.state.speed,
            self._lane_context(),
            self._nav_targets[self._route_idx],
            self.walls,
            self.traffic.poses(),
            self.config.vehicle,
            self.obstacles,
        )

    # -- stepping -------------------------------------------------------------

    def _ego_rect(self) -> np.ndarray:
        v = self.config.vehicle
        return rect_corners(
            self.state.pose.position, self.state.pose.heading, v.length, v.width
        )

    def _crashed(self) -> bool:
        ego = self._ego_rect()
        for pose, _speed in self.traffic.poses():
            other = rect_corners(pose.position, pose.heading, 4.5, 2.0)
            if rects_overlap(ego, other):
                return True
        for pose in self.obstacles:
            other = rect_corners(pose.position, pose.heading, 4.5, 2.0)
            if rects_overlap(ego, other):
                return True
        return False

    def _check_termination(self, crashed: bool) -> TerminalState:
        if crashed and not self.config.safety_mode:
            return TerminalState.CRASH
        lane, fr = self._nearest_lane()
        half = lane.group_lanes * self.net.config.lane_width / 2.0
        if abs(fr.d + lane.road_offset) > half:
            return TerminalState.OUT_OF_ROAD
        dest = self.net.destination
        if dest is not None:
            if self.state.pose.position.dist(dest.pose.position) <= SUCCESS_RADIUS:
                return TerminalState.SUCCESS
        if self._steps >= self.config.max_steps:
            return TerminalState.MAX_STEP
        return TerminalState.NONE

    def step(self, action) -> StepResult:
        if self._done:
            raise EpisodeDoneError("episode is finished; call reset")
        if not isinstance(action, Action):
            action = Action(float(action[0]), float(action[1]))
        control = map_action(action)
        self.state = step_dynamics(self.state, control, self.config.vehicle, STEP_DT)

        lane, fr = self._nearest_lane()
        externals = [
            (lane.id, fr.s, self.state.speed, self.config.vehicle.length / 2.0)
        ]
        externals.extend(self._obstacle_occupants)
        self.traffic.step(STEP_DT, externals=externals)

        self._steps += 1
        progress = self._route_progress()
        crashed = self._crashed()
        terminal = self._check_termination(crashed)

        cost = 1.0 if (crashed and self.config.safety_mode) else 0.0
        self._cost_total += cost

        reward, components = compute_reward(
            self.config.reward,
            progress - self._progress,
            self.state.speed,
            self.config.vehicle.v_max,
            action.a1 - self._prev_a1,
            terminal,
        )
        self._progress = progress
        self._prev_a1 = action.a1
        self._done = terminal is not TerminalState.NONE
        info = {
            "terminal": terminal,
            "cost": cost,
            "components": components,
            "steps": self._steps,
        }
        return StepResult(self._observe(), reward, self._done, info)

    @property
    def done(self) -> bool:
        return self._done

    @property
    def total_cost(self) -> float:
        return self._cost_total

    @property
    def steps(self) -> int:
        return self._steps


# -- episode tracing -----------------------------------------------------------


def trace_header(seed: int, config: EnvConfig) -> str:
    return json.dumps(
        {
            "seed": seed,
            "blocks": config.map.n_blocks,
            "lanes": config.map.lanes,
            "lane_width": config.map.lane_width,
            "density": config.traffic.density,
            "max_steps": config.max_steps,
        },
        separators=(",", ":"),
    )


def trace_line(t: int, env: DrivingEnv, action: Action, result: StepResult) -> str:
    pose = env.state.pose
    return json.dumps(
        {
            "t": t,
            "x": pose.position.x,
            "y": pose.position.y,
            "heading": pose.heading,
            "speed": env.state.speed,
            "action": [action.a1, action.a2],
            "reward": result.reward,
            "terminal": result.info["terminal"].value,
        },
        separators=(",", ":"),
    )
