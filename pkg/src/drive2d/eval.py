"""Batch evaluation: train/test seed split, scripted baseline policies,
per-episode records, and aggregate metrics.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, replace

from . import rng as rngmod
from .blocks import BlockType, instantiate, origin_socket
from .env import DrivingEnv, EnvConfig, TerminalState
from .geometry import frenet_project, lane_curvature, lane_heading_at, normalize_angle
from .pgmap import MapConfig, RoadNetwork
from .traffic import IDMParams, idm_accel
from .vehicle import GRAVITY, HP_TO_WATT, Action

TEST_SEED_LIMIT = 200


def test_seeds() -> range:
    """The fixed held-out evaluation seeds."""
    return range(0, TEST_SEED_LIMIT)


def train_seeds(n: int) -> range:
    """n training seeds, disjoint from the test set by construction."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    return range(TEST_SEED_LIMIT, TEST_SEED_LIMIT + n)


@dataclass(frozen=True)
class EpisodeRecord:
    seed: int
    terminal: TerminalState
    episode_return: float
    cost: float
    steps: int
    error: str | None = None


@dataclass(frozen=True)
class Metrics:
    success_rate: float
    out_of_road_rate: float
    crash_rate: float
    max_step_rate: float
    mean_return: float
    mean_cost: float
    episodes: int
    errors: int


def compute_metrics(records: list[EpisodeRecord]) -> Metrics:
    """Tally terminal-state fractions and mean return/cost.

    Episodes that errored out are counted separately and excluded from the
    four-way rate partition, which therefore sums to exactly 1 on counts.
    """
    if not records:
        raise ValueError("no episode records")
    clean = [r for r in records if r.error is None]
    errors = len(records) - len(clean)
    if not clean:
        raise ValueError("all episodes errored")
    n = len(clean)
    counts = {t: 0 for t in TerminalState}
    for r in clean:
        counts[r.terminal] += 1
    return Metrics(
        success_rate=counts[TerminalState.SUCCESS] / n,
        out_of_road_rate=counts[TerminalState.OUT_OF_ROAD] / n,
        crash_rate=counts[TerminalState.CRASH] / n,
        max_step_rate=counts[TerminalState.MAX_STEP] / n,
        mean_return=sum(r.episode_return for r in clean) / n,
        mean_cost=sum(r.cost for r in clean) / n,
        episodes=n,
        errors=errors,
    )


# ---------------------------------------------------------------------------
# scripted policies
# ---------------------------------------------------------------------------


class ZeroPolicy:
    """Never moves; used to exercise the MaxStep path."""

    def reset(self, env: DrivingEnv, seed: int) -> None:
        pass

    def act(self, obs, env: DrivingEnv) -> Action:
        return Action(0.0, 0.0)


class RandomPolicy:
    """Uniform random actions from the policy stream of the episode seed."""

    def reset(self, env: DrivingEnv, seed: int) -> None:
        self.rng = rngmod.make_rng(seed, rngmod.POLICY_STREAM)

    def act(self, obs, env: DrivingEnv) -> Action:
        return Action(
            rngmod.rand_uniform(self.rng, -1.0, 1.0),
            rngmod.rand_uniform(self.rng, -1.0, 1.0),
        )


class LaneFollowPolicy:
    """Privileged waypoint follower: curvature feedforward plus a Stanley-style
    lateral correction for steering, and IDM against the nearest vehicle in a
    forward corridor for speed."""

    cruise_speed: float = 13.0
    corner_margin: float = 0.85
    k_lateral: float = 1.8
    k_soft: float = 2.0

    def reset(self, env: DrivingEnv, seed: int) -> None:
        pass

    def _speed_target(self, env: DrivingEnv) -> float:
        """Cruise speed capped by the sharpest curvature coming up."""
        params = env.config.vehicle
        idx = env._route_idx
        kappa = 0.0
        for lid in env._route_lanes[idx : idx + 2]:
            kappa = max(kappa, abs(lane_curvature(env.net.lane(lid).geom)))
        if kappa < 1e-9:
            return self.cruise_speed
        limit = self.corner_margin * math.sqrt(
            params.friction * GRAVITY / kappa
        )
        return min(self.cruise_speed, limit)

    def _leader(self, env: DrivingEnv) -> tuple[float, float]:
        """Gap and speed of the closest vehicle in the forward corridor."""
        pose = env.state.pose
        best = (math.inf, 0.0)
        bodies = list(env.traffic.poses()) + [(p, 0.0) for p in env.obstacles]
        for other, speed in bodies:
            rel = pose.to_local(other.position)
            if 0.0 < rel.x < 30.0 and abs(rel.y) < 2.6:
                gap = rel.x - env.config.vehicle.length
                if gap < best[0]:
                    best = (gap, speed)
        return best

    def act(self, obs, env: DrivingEnv) -> Action:
        params = env.config.vehicle
        state = env.state
        lane = env.net.lane(env._route_lanes[env._route_idx])
        fr = frenet_project(lane.geom, state.pose.position)
        herr = normalize_angle(
            state.pose.heading - lane_heading_at(lane.geom, fr.s)
        )
        kappa = lane_curvature(lane.geom)
        steer = (
            math.atan(params.wheelbase * kappa)
            - herr
            + math.atan(-self.k_lateral * fr.d / (state.speed + self.k_soft))
        )
        a1 = max(-1.0, min(1.0, steer / params.max_steer))

        target = self._speed_target(env)
        gap, v_lead = self._leader(env)
        route = env._route_lanes
        upcoming = route[env._route_idx + 1 : env._route_idx + 5]
        if upcoming:
            hold = env.traffic.junction_hold(lane.id, fr.s, upcoming)
            if hold is not None and hold < gap:
                gap, v_lead = hold, 0.0
        idm = IDMParams(v0=target, t_headway=1.5, s0=4.0, a_max=2.0, b=3.0)
        if math.isinf(gap):
            a_des = idm_accel(state.speed, 0.0, 1e9, idm)
        else:
            a_des = idm_accel(state.speed, v_lead, max(gap, 0.01), idm)

        v_eff = max(state.speed, 1.0)
        drag = params.drag * state.speed
        if a_des >= 0.0:
            hp = (a_des + drag) * params.mass * v_eff / HP_TO_WATT
            a2 = min(1.0, hp / params.max_engine)
        else:
            hp = (-a_des - drag) * params.mass * v_eff / HP_TO_WATT
            a2 = -min(1.0, max(hp, 0.0) / params.max_brake)
        return Action(a1, a2)


POLICIES = {
    "zero": ZeroPolicy,
    "random": RandomPolicy,
    "lane-follow": LaneFollowPolicy,
}


def make_policy(name: str):
    if name not in POLICIES:
        raise ValueError(f"unknown policy {name!r}; choose from {sorted(POLICIES)}")
    return POLICIES[name]()


# ---------------------------------------------------------------------------
# batch running
# ---------------------------------------------------------------------------


def single_straight_network(seed: int, lanes: int = 3) -> RoadNetwork:
    """A one-block straight map whose length varies with the seed."""
    rng = rngmod.make_rng(seed, rngmod.MAP_STREAM)
    length = rngmod.rand_uniform(rng, 60.0, 100.0)
    cfg = MapConfig(n_blocks=1, lanes=lanes)
    net = RoadNetwork(cfg, seed=seed)
    anchor = origin_socket(lanes)
    blk = instantiate(
        BlockType.STRAIGHT,
        {
            "lanes": lanes,
            "length": length,
            "line_type": "broken",
            "lane_width": cfg.lane_width,
        },
        anchor,
        0,
    )
    net.push(blk, anchor)
    return net


def run_episode(policy, seed: int, cfg: EnvConfig) -> EpisodeRecord:
    env = DrivingEnv(cfg)
    obs = env.reset(seed)
    policy.reset(env, seed)
    total = 0.0
    while not env.done:
        res = env.step(policy.act(obs, env))
        obs = res.obs
        total += res.reward
    return EpisodeRecord(
        seed=seed,
        terminal=res.info["terminal"],
        episode_return=total,
        cost=env.total_cost,
        steps=env.steps,
    )


def run_episodes(
    policy,
    seeds,
    cfg: EnvConfig,
    network_for_seed=None,
) -> list[EpisodeRecord]:
    """One deterministic episode per seed, in seed order.

    network_for_seed overrides map generation with an explicit per-seed
    network. Errors are captured per episode rather than aborting the batch.
    """
    records = []
    for seed in seeds:
        run_cfg = cfg
        if network_for_seed is not None:
            run_cfg = replace(cfg, network=network_for_seed(seed))
        try:
            records.append(run_episode(policy, seed, run_cfg))
        except Exception as exc:  # recorded, not fatal
            records.append(
                EpisodeRecord(
                    seed=seed,
                    terminal=TerminalState.NONE,
                    episode_return=0.0,
                    cost=0.0,
                    steps=0,
                    error=f"{type(exc).__name__}: {exc}",
                )
            )
    return records


def metrics_report(metrics: Metrics, config_echo: dict) -> str:
    """Structured report document: metrics plus the configuration that
    produced them."""
    return json.dumps(
        {
            "metrics": {
                "success_rate": metrics.success_rate,
                "out_of_road_rate": metrics.out_of_road_rate,
                "crash_rate": metrics.crash_rate,
                "max_step_rate": metrics.max_step_rate,
                "mean_return": metrics.mean_return,
                "mean_cost": metrics.mean_cost,
                "episodes": metrics.episodes,
                "errors": metrics.errors,
            },
            "config": config_echo,
        },
        indent=2,
        sort_keys=True,
    )


def metrics_table(metrics: Metrics) -> str:
    rows = [
        ("success", metrics.success_rate),
        ("out_of_road", metrics.out_of_road_rate),
        ("crash", metrics.crash_rate),
        ("max_step", metrics.max_step_rate),
    ]
    lines = [f"{'terminal':<12} {'rate':>8}"]
    lines += [f"{name:<12} {rate:>8.3f}" for name, rate in rows]
    lines.append(f"{'mean return':<12} {metrics.mean_return:>8.2f}")
    lines.append(f"{'mean cost':<12} {metrics.mean_cost:>8.2f}")
    lines.append(f"{'episodes':<12} {metrics.episodes:>8d}")
    return "\n".join(lines)


def bench(steps: int, density: float = 0.1, seed: int = 0, blocks: int = 3) -> dict:
    """Throughput probe: random-policy stepping on one map, episodes chained
    by reset, wall-clock measured over the whole run."""
    cfg = EnvConfig(
        map=MapConfig(n_blocks=blocks, lanes=3),
        traffic=replace(EnvConfig().traffic, density=density),
    )
    env = DrivingEnv(cfg)
    policy = RandomPolicy()
    obs = env.reset(seed)
    policy.reset(env, seed)
    t0 = time.perf_counter()
    done_count = 0
    for _ in range(steps):
        if env.done:
            obs = env.reset(seed)
            policy.reset(env, seed)
            done_count += 1
        obs = env.step(policy.act(obs, env)).obs
    elapsed = time.perf_counter() - t0
    return {
        "steps": steps,
        "seconds": elapsed,
        "steps_per_second": steps / elapsed,
        "episodes_completed": done_count,
        "density": density,
    }
