"""Generalization sweep: train a policy on N procedural maps, test on held-out maps.

The study this script runs: for each training-set size N, train an agent on
maps generated from seeds 200..200+N-1, then measure its success rate on the
held-out test maps (seeds 0..199). The expected qualitative outcome is that
test success rises with N, because agents trained on a single map overfit its
geometry while agents trained on many maps learn transferable driving
behavior. Training needs millions of environment steps per point, so this
script is exported for use on real training hardware rather than run in CI,
and nothing in the test suite gates on its output.

It wires the environment to an external trainer through the Gymnasium API:

    pip install gymnasium stable-baselines3
    python scripts/generalization_experiment.py --train-maps 1 5 20 100 \
        --total-steps 1000000 --out sweep.csv

Each row of the CSV is (n_train_maps, total_steps, test_success_rate,
test_mean_return). Any Gymnasium-compatible trainer can be substituted by
importing MapCyclingEnv from this file.
"""

from __future__ import annotations

import argparse
import csv
import sys

import numpy as np

from drive2d import (
    Action,
    DrivingEnv,
    EnvConfig,
    MapConfig,
    TerminalState,
    TrafficConfig,
    test_seeds,
    train_seeds,
)

try:
    import gymnasium as gym

    HAVE_GYM = True
except ImportError:
    HAVE_GYM = False


def sweep_config() -> EnvConfig:
    return EnvConfig(
        map=MapConfig(n_blocks=3),
        traffic=TrafficConfig(density=0.1),
    )


if HAVE_GYM:

    class MapCyclingEnv(gym.Env):
        """Gymnasium wrapper that draws a fresh map from a seed pool per episode."""

        metadata = {"render_modes": []}

        def __init__(self, seeds, config: EnvConfig | None = None):
            self.seeds = list(seeds)
            self._cursor = 0
            self.env = DrivingEnv(config or sweep_config())
            self.observation_space = gym.spaces.Box(
                low=-1.0, high=1.0, shape=(266,), dtype=np.float32
            )
            self.action_space = gym.spaces.Box(
                low=-1.0, high=1.0, shape=(2,), dtype=np.float32
            )

        def reset(self, *, seed=None, options=None):
            super().reset(seed=seed)
            map_seed = self.seeds[self._cursor % len(self.seeds)]
            self._cursor += 1
            obs = self.env.reset(map_seed)
            return obs.astype(np.float32), {"map_seed": map_seed}

        def step(self, action):
            res = self.env.step(Action(float(action[0]), float(action[1])))
            info = dict(res.info)
            info["terminal"] = info["terminal"].name
            truncated = res.info["terminal"] is TerminalState.MAX_STEP
            terminated = res.done and not truncated
            return (
                res.obs.astype(np.float32),
                float(res.reward),
                terminated,
                truncated,
                info,
            )


def evaluate(model, seeds, config: EnvConfig) -> tuple[float, float]:
    """Deterministic rollout of a trained model over the given map seeds."""
    env = DrivingEnv(config)
    successes = 0
    returns = []
    for seed in seeds:
        obs = env.reset(seed)
        total = 0.0
        res = None
        while not env.done:
            action, _ = model.predict(obs.astype(np.float32), deterministic=True)
            res = env.step(Action(float(action[0]), float(action[1])))
            obs = res.obs
            total += res.reward
        successes += res.info["terminal"] is TerminalState.SUCCESS
        returns.append(total)
    return successes / len(returns), float(np.mean(returns))


def run_sweep(train_sizes, total_steps, eval_episodes, out_path):
    from stable_baselines3 import PPO

    config = sweep_config()
    held_out = list(test_seeds())[:eval_episodes]
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["n_train_maps", "total_steps", "test_success_rate", "test_mean_return"]
        )
        for n in train_sizes:
            env = MapCyclingEnv(train_seeds(n), config)
            model = PPO("MlpPolicy", env, verbose=1)
            model.learn(total_timesteps=total_steps)
            rate, mean_ret = evaluate(model, held_out, config)
            writer.writerow([n, total_steps, f"{rate:.4f}", f"{mean_ret:.3f}"])
            fh.flush()
            print(f"n={n}: test success {rate:.3f}, mean return {mean_ret:.2f}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument(
        "--train-maps", type=int, nargs="+", default=[1, 5, 20, 100],
        help="training-set sizes N to sweep",
    )
    parser.add_argument(
        "--total-steps", type=int, default=1_000_000,
        help="trainer timesteps per sweep point",
    )
    parser.add_argument(
        "--eval-episodes", type=int, default=200,
        help="how many held-out test maps to evaluate on",
    )
    parser.add_argument("--out", default="generalization_sweep.csv")
    args = parser.parse_args(argv)

    if not HAVE_GYM:
        print(
            "this experiment needs an external trainer; install the training "
            "stack first:\n    pip install gymnasium stable-baselines3",
            file=sys.stderr,
        )
        return 1
    try:
        run_sweep(args.train_maps, args.total_steps, args.eval_episodes, args.out)
    except ImportError as exc:
        print(f"missing trainer dependency: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
