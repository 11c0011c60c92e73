"""Command-line interface: map generation, SVG export, episode running,
batch evaluation, throughput benchmarking, and a line-protocol server for
out-of-process callers.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .env import DrivingEnv, EnvConfig, EpisodeDoneError, trace_header, trace_line
from .eval import (
    POLICIES,
    compute_metrics,
    make_policy,
    metrics_report,
    run_episodes,
    single_straight_network,
    test_seeds,
    train_seeds,
)
from .eval import bench as bench_probe
from .pgmap import MapConfig, MapGenerationError, generate_map, serialize
from .svg import render_svg
from .traffic import TrafficConfig
from .vehicle import Action

USAGE_EXIT = 1
RUNTIME_EXIT = 2


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad flags; the contract reserves 2 for runtime
    failures and 1 for usage errors, so remap."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"{self.prog}: error: {message}\n")


def _parse_seed_range(text: str) -> range:
    """'A..B' inclusive on both ends, or a single integer."""
    if ".." in text:
        lo_s, hi_s = text.split("..", 1)
        lo, hi = int(lo_s), int(hi_s)
        if lo > hi:
            raise ValueError(f"empty seed range {text!r}")
        return range(lo, hi + 1)
    value = int(text)
    return range(value, value + 1)


def _map_config(args) -> MapConfig:
    return MapConfig(
        n_blocks=args.blocks,
        max_tries=args.tries,
        lanes=args.lanes,
        lane_width=args.lane_width,
    )


def _add_map_flags(p, blocks=3):
    p.add_argument("--blocks", type=int, default=blocks, help="blocks per map")
    p.add_argument("--tries", type=int, default=40, help="placement retries per block")
    p.add_argument("--lanes", type=int, default=3, help="lanes per road")
    p.add_argument("--lane-width", type=float, default=3.5, help="lane width in m")


def _gen_one(seed: int, cfg: MapConfig) -> tuple[int, str | None, str | None]:
    try:
        return seed, serialize(generate_map(cfg, seed)), None
    except MapGenerationError as exc:
        return seed, None, str(exc)


def cmd_gen(args) -> int:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"gen: cannot create {out}: {exc}", file=sys.stderr)
        return RUNTIME_EXIT
    cfg = _map_config(args)
    seeds = list(args.seeds)
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_gen_one, seeds, [cfg] * len(seeds)))
    else:
        results = [_gen_one(seed, cfg) for seed in seeds]
    failures = 0
    for seed, doc, err in results:
        if doc is None:
            failures += 1
            print(f"gen: seed {seed}: {err}", file=sys.stderr)
            continue
        try:
            (out / f"map_{seed}.json").write_text(doc)
        except OSError as exc:
            print(f"gen: seed {seed}: {exc}", file=sys.stderr)
            return RUNTIME_EXIT
    print(f"wrote {len(seeds) - failures}/{len(seeds)} maps to {out}")
    return RUNTIME_EXIT if failures else 0


def cmd_render(args) -> int:
    try:
        net = generate_map(_map_config(args), args.seed)
    except MapGenerationError as exc:
        print(f"render: {exc}", file=sys.stderr)
        return RUNTIME_EXIT
    try:
        Path(args.out).write_text(render_svg(net))
    except OSError as exc:
        print(f"render: {exc}", file=sys.stderr)
        return RUNTIME_EXIT
    print(f"wrote {args.out}")
    return 0


def _env_config(args, network=None) -> EnvConfig:
    return EnvConfig(
        map=_map_config(args),
        traffic=TrafficConfig(density=args.density),
        max_steps=args.max_steps,
        network=network,
    )


def cmd_run(args) -> int:
    if args.actions is None and args.policy is None:
        print("run: provide --policy or --actions", file=sys.stderr)
        return USAGE_EXIT
    network = (
        single_straight_network(args.map_seed, args.lanes)
        if args.straight
        else None
    )
    cfg = _env_config(args, network=network)
    env = DrivingEnv(cfg)
    trace_out = [trace_header(args.map_seed, cfg)]

    try:
        obs = env.reset(args.map_seed)
    except MapGenerationError as exc:
        print(f"run: {exc}", file=sys.stderr)
        return RUNTIME_EXIT

    total = 0.0
    t = 0
    if args.actions is not None:
        try:
            seq = json.loads(Path(args.actions).read_text())
            actions = [Action(float(a1), float(a2)) for a1, a2 in seq]
        except (OSError, ValueError, TypeError) as exc:
            print(f"run: bad actions file: {exc}", file=sys.stderr)
            return RUNTIME_EXIT
        stream = iter(actions)

        def next_action(_obs):
            return next(stream, None)

    else:
        policy = make_policy(args.policy)
        policy.reset(env, args.map_seed)

        def next_action(obs):
            return policy.act(obs, env)

    result = None
    while not env.done:
        action = next_action(obs)
        if action is None:
            break
        result = env.step(action)
        obs = result.obs
        total += result.reward
        t += 1
        trace_out.append(trace_line(t, env, action, result))

    terminal = result.info["terminal"].name if result else "NONE"
    print(f"terminal={terminal} return={total:.6f} steps={t}")
    if args.trace:
        try:
            Path(args.trace).write_text("\n".join(trace_out) + "\n")
        except OSError as exc:
            print(f"run: {exc}", file=sys.stderr)
            return RUNTIME_EXIT
    if args.svg:
        try:
            Path(args.svg).write_text(render_svg(env.net))
        except OSError as exc:
            print(f"run: {exc}", file=sys.stderr)
            return RUNTIME_EXIT
    return 0


def cmd_eval(args) -> int:
    if args.test:
        seeds: range = test_seeds()
    elif args.train_n is not None:
        seeds = train_seeds(args.train_n)
    elif args.seeds is not None:
        seeds = args.seeds
    else:
        print("eval: provide --seeds, --test, or --train-n", file=sys.stderr)
        return USAGE_EXIT
    cfg = _env_config(args)
    policy = make_policy(args.policy)
    network_for_seed = None
    if args.straight:
        network_for_seed = lambda s: single_straight_network(s, args.lanes)
    records = run_episodes(policy, seeds, cfg, network_for_seed=network_for_seed)
    metrics = compute_metrics(records)
    echo = {
        "policy": args.policy,
        "seeds": f"{seeds.start}..{seeds.stop - 1}",
        "density": args.density,
        "blocks": args.blocks,
        "straight": bool(args.straight),
    }
    doc = metrics_report(metrics, echo)
    if args.out:
        try:
            Path(args.out).write_text(doc + "\n")
        except OSError as exc:
            print(f"eval: {exc}", file=sys.stderr)
            return RUNTIME_EXIT
    print(doc)
    return 0


def cmd_bench(args) -> int:
    out = bench_probe(
        steps=args.steps, density=args.density, seed=args.seed, blocks=args.blocks
    )
    print(json.dumps(out, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# line-protocol server
# ---------------------------------------------------------------------------

_CONFIG_KEYS = {
    "map_seed": int,
    "map_blocks": int,
    "map_lanes": int,
    "map_tries": int,
    "lane_width": float,
    "traffic_density": float,
    "aggressive_fraction": float,
    "max_steps": int,
    "safety_mode": bool,
    "obstacle_density": float,
}


def config_from_mapping(mapping: dict) -> tuple[EnvConfig, int]:
    """Flat string-keyed config → EnvConfig plus the default reset seed.

    Every key is optional; unknown keys and mistyped values are rejected so
    a caller's typo cannot silently fall back to a default.
    """
    vals = {}
    for key, raw in mapping.items():
        want = _CONFIG_KEYS.get(key)
        if want is None:
            raise ValueError(
                f"unknown config key {key!r}; valid: {sorted(_CONFIG_KEYS)}"
            )
        if want is bool:
            if not isinstance(raw, bool):
                raise TypeError(f"config key {key!r} wants bool, got {raw!r}")
            vals[key] = raw
        elif want is int:
            if isinstance(raw, bool) or not isinstance(raw, int):
                raise TypeError(f"config key {key!r} wants int, got {raw!r}")
            vals[key] = raw
        else:
            if isinstance(raw, bool) or not isinstance(raw, (int, float)):
                raise TypeError(f"config key {key!r} wants number, got {raw!r}")
            vals[key] = float(raw)
    cfg = EnvConfig(
        map=MapConfig(
            n_blocks=vals.get("map_blocks", 3),
            max_tries=vals.get("map_tries", 40),
            lanes=vals.get("map_lanes", 3),
            lane_width=vals.get("lane_width", 3.5),
        ),
        traffic=TrafficConfig(
            density=vals.get("traffic_density", 0.1),
            aggressive_fraction=vals.get("aggressive_fraction", 0.5),
        ),
        max_steps=vals.get("max_steps", 1500),
        safety_mode=vals.get("safety_mode", False),
        obstacle_density=vals.get("obstacle_density", 0.0),
    )
    return cfg, vals.get("map_seed", 0)


def _serve_loop(stdin, stdout) -> None:
    """One JSON request per line, one JSON response per line.

    Ops: make {config}, reset {seed}, step {action}, close. Errors come
    back as {"ok": false, "error": msg} and never kill the process except
    for close, which acknowledges and ends the loop.
    """
    env: DrivingEnv | None = None
    default_seed = 0

    def reply(payload: dict) -> None:
        stdout.write(json.dumps(payload, separators=(",", ":")) + "\n")
        stdout.flush()

    for raw in stdin:
        line = raw.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
            op = req.get("op")
            if op == "make":
                cfg, default_seed = config_from_mapping(req.get("config", {}))
                env = DrivingEnv(cfg)
                reply({"ok": True, "obs_len": 266})
            elif op == "reset":
                if env is None:
                    raise RuntimeError("make must come before reset")
                seed = int(req.get("seed", default_seed))
                obs = env.reset(seed)
                reply({"ok": True, "obs": [float(v) for v in obs]})
            elif op == "step":
                if env is None:
                    raise RuntimeError("make must come before step")
                a1, a2 = req["action"]
                result = env.step(Action(float(a1), float(a2)))
                pose = env.state.pose
                reply(
                    {
                        "ok": True,
                        "obs": [float(v) for v in result.obs],
                        "reward": result.reward,
                        "done": result.done,
                        "terminal": result.info["terminal"].value,
                        "cost": result.info["cost"],
                        "steps": result.info["steps"],
                        "x": pose.position.x,
                        "y": pose.position.y,
                        "heading": pose.heading,
                        "speed": env.state.speed,
                    }
                )
            elif op == "close":
                env = None
                reply({"ok": True})
                return
            else:
                reply({"ok": False, "error": f"unknown op {op!r}"})
        except EpisodeDoneError as exc:
            reply({"ok": False, "error": f"EpisodeDoneError: {exc}"})
        except Exception as exc:  # caller errors must not kill the server
            reply({"ok": False, "error": f"{type(exc).__name__}: {exc}"})


def cmd_serve(_args) -> int:
    _serve_loop(sys.stdin, sys.stdout)
    return 0


# ---------------------------------------------------------------------------
# parser wiring
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="drive2d", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate maps and write serializations")
    p.add_argument("--seeds", type=_parse_seed_range, required=True,
                   help="seed or inclusive range A..B")
    _add_map_flags(p)
    p.add_argument("--out", default="maps", help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers")
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("render", help="render one map to SVG")
    p.add_argument("--seed", type=int, required=True)
    _add_map_flags(p)
    p.add_argument("--out", required=True, help="output .svg path")
    p.set_defaults(fn=cmd_render)

    p = sub.add_parser("run", help="run one episode")
    p.add_argument("--map-seed", type=int, required=True)
    p.add_argument("--policy", choices=sorted(POLICIES))
    p.add_argument("--actions", help="JSON file with [a1,a2] pairs to replay")
    p.add_argument("--density", type=float, default=0.1)
    _add_map_flags(p)
    p.add_argument("--max-steps", type=int, default=1500)
    p.add_argument("--straight", action="store_true",
                   help="single straight-road map instead of a generated one")
    p.add_argument("--trace", help="write per-step trace lines here")
    p.add_argument("--svg", help="write the episode map render here")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("eval", help="batch episodes, aggregate metrics")
    p.add_argument("--policy", required=True, choices=sorted(POLICIES))
    p.add_argument("--seeds", type=_parse_seed_range, help="inclusive range A..B")
    p.add_argument("--test", action="store_true", help="held-out seeds 0..199")
    p.add_argument("--train-n", type=int, help="first N training seeds")
    p.add_argument("--density", type=float, default=0.1)
    _add_map_flags(p)
    p.add_argument("--max-steps", type=int, default=1500)
    p.add_argument("--straight", action="store_true")
    p.add_argument("--out", help="also write the report here")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("bench", help="steps-per-second probe")
    p.add_argument("--steps", type=int, default=10_000,
                   help="env steps to time (>= 1000)")
    p.add_argument("--density", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--blocks", type=int, default=3)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("serve", help="JSON-lines env server on stdin/stdout")
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "bench" and args.steps < 1000:
        parser.error("bench --steps must be at least 1000")
    if args.command == "run" and args.actions and args.policy:
        parser.error("run takes --policy or --actions, not both")
    try:
        return args.fn(args)
    except KeyboardInterrupt:
        return RUNTIME_EXIT
    except ValueError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return RUNTIME_EXIT


if __name__ == "__main__":
    sys.exit(main())
