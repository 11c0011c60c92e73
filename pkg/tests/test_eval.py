from __future__ import annotations

import json
import math

import pytest

from drive2d.env import EnvConfig, TerminalState
from drive2d.eval import (
    EpisodeRecord,
    LaneFollowPolicy,
    Metrics,
    RandomPolicy,
    ZeroPolicy,
    bench,
    compute_metrics,
    make_policy,
    metrics_report,
    metrics_table,
    run_episode,
    run_episodes,
    single_straight_network,
    train_seeds,
)
from drive2d.eval import test_seeds as held_out_seeds
from drive2d.pgmap import MapConfig
from drive2d.traffic import TrafficConfig

NO_TRAFFIC = EnvConfig(traffic=TrafficConfig(density=0.0))


# ---------------------------------------------------------------------------
# seed split
# ---------------------------------------------------------------------------


def test_seed_split_is_disjoint():
    held_out = set(held_out_seeds())
    assert held_out == set(range(200))
    for n in (1, 10, 500):
        assert held_out.isdisjoint(train_seeds(n))
        assert len(train_seeds(n)) == n


def test_train_seeds_rejects_negative():
    with pytest.raises(ValueError):
        train_seeds(-1)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def _rec(seed, terminal, ret=0.0, cost=0.0, steps=10, error=None):
    return EpisodeRecord(
        seed=seed,
        terminal=terminal,
        episode_return=ret,
        cost=cost,
        steps=steps,
        error=error,
    )


def test_compute_metrics_partition_and_means():
    records = [
        _rec(0, TerminalState.SUCCESS, ret=30.0, cost=0.0),
        _rec(1, TerminalState.SUCCESS, ret=20.0, cost=1.0),
        _rec(2, TerminalState.CRASH, ret=-10.0, cost=2.0),
        _rec(3, TerminalState.OUT_OF_ROAD, ret=-5.0),
        _rec(4, TerminalState.MAX_STEP, ret=5.0, cost=1.0),
    ]
    m = compute_metrics(records)
    assert m.success_rate == 0.4
    assert m.crash_rate == 0.2
    assert m.out_of_road_rate == 0.2
    assert m.max_step_rate == 0.2
    total = m.success_rate + m.crash_rate + m.out_of_road_rate + m.max_step_rate
    assert math.isclose(total, 1.0)
    assert math.isclose(m.mean_return, 8.0)
    assert math.isclose(m.mean_cost, 0.8)
    assert m.episodes == 5 and m.errors == 0


def test_compute_metrics_excludes_errors_from_rates():
    records = [
        _rec(0, TerminalState.SUCCESS),
        _rec(1, TerminalState.NONE, error="ValueError: boom"),
    ]
    m = compute_metrics(records)
    assert m.success_rate == 1.0
    assert m.episodes == 1 and m.errors == 1


def test_compute_metrics_empty_raises():
    with pytest.raises(ValueError):
        compute_metrics([])
    with pytest.raises(ValueError):
        compute_metrics([_rec(0, TerminalState.NONE, error="x")])


def test_metrics_report_round_trips_json():
    m = compute_metrics([_rec(0, TerminalState.SUCCESS, ret=12.5)])
    doc = json.loads(metrics_report(m, {"policy": "zero", "episodes": 1}))
    assert doc["metrics"]["success_rate"] == 1.0
    assert doc["config"]["policy"] == "zero"
    assert "mean_return" in doc["metrics"]


def test_metrics_table_lists_all_terminals():
    m = compute_metrics([_rec(0, TerminalState.SUCCESS)])
    table = metrics_table(m)
    for name in ("success", "out_of_road", "crash", "max_step", "episodes"):
        assert name in table


# ---------------------------------------------------------------------------
# policies
# ---------------------------------------------------------------------------


def test_make_policy_names():
    assert isinstance(make_policy("zero"), ZeroPolicy)
    assert isinstance(make_policy("random"), RandomPolicy)
    assert isinstance(make_policy("lane-follow"), LaneFollowPolicy)
    with pytest.raises(ValueError):
        make_policy("ppo")


def test_zero_policy_times_out_at_rest():
    rec = run_episode(ZeroPolicy(), 0, NO_TRAFFIC)
    assert rec.terminal == TerminalState.MAX_STEP
    assert rec.steps == NO_TRAFFIC.max_steps


def test_random_policy_is_reproducible():
    a = run_episode(RandomPolicy(), 7, NO_TRAFFIC)
    b = run_episode(RandomPolicy(), 7, NO_TRAFFIC)
    assert a == b


def test_lane_follow_reaches_goal_on_straights():
    recs = run_episodes(
        LaneFollowPolicy(),
        range(5),
        NO_TRAFFIC,
        network_for_seed=single_straight_network,
    )
    for rec in recs:
        assert rec.terminal == TerminalState.SUCCESS, rec
        assert rec.episode_return > 0.0
        assert rec.error is None


def test_lane_follow_handles_traffic_map():
    cfg = EnvConfig(
        map=MapConfig(n_blocks=3), traffic=TrafficConfig(density=0.1)
    )
    rec = run_episode(LaneFollowPolicy(), 0, cfg)
    assert rec.error is None
    assert rec.terminal in (TerminalState.SUCCESS, TerminalState.MAX_STEP)


# ---------------------------------------------------------------------------
# batch running
# ---------------------------------------------------------------------------


def test_run_episodes_is_deterministic():
    first = run_episodes(RandomPolicy(), range(3), NO_TRAFFIC)
    second = run_episodes(RandomPolicy(), range(3), NO_TRAFFIC)
    assert first == second


def test_run_episodes_records_errors_per_seed():
    class Exploding:
        def reset(self, env, seed):
            if seed == 1:
                raise RuntimeError("boom")

        def act(self, obs, env):
            from drive2d.vehicle import Action

            return Action(0.0, 0.0)

    cfg = EnvConfig(traffic=TrafficConfig(density=0.0), max_steps=5)
    recs = run_episodes(Exploding(), range(3), cfg)
    assert [r.error is None for r in recs] == [True, False, True]
    assert "RuntimeError" in recs[1].error


def test_bench_reports_throughput():
    out = bench(steps=60, density=0.0, seed=0, blocks=1)
    assert out["steps"] == 60
    assert out["steps_per_second"] > 0.0
    assert out["seconds"] > 0.0
