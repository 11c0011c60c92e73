"""Headless 2D driving simulator: procedurally generated road networks,
rule-based traffic, and a deterministic step/reset environment built for
reinforcement-learning experiments on driving generalization.
"""

from .blocks import BlockType
from .env import (
    STEP_DT,
    DrivingEnv,
    EnvConfig,
    EpisodeDoneError,
    RewardConfig,
    StepResult,
    TerminalState,
    compute_reward,
    trace_header,
    trace_line,
)
from .eval import (
    EpisodeRecord,
    LaneFollowPolicy,
    Metrics,
    RandomPolicy,
    ZeroPolicy,
    bench,
    compute_metrics,
    make_policy,
    run_episode,
    run_episodes,
    single_straight_network,
    test_seeds,
    train_seeds,
)
from .pgmap import (
    MapConfig,
    MapGenerationError,
    RoadNetwork,
    deserialize,
    generate_map,
    generate_maps,
    serialize,
)
from .sensing import LIDAR_RANGE, N_RAYS, OBS_SIZE
from .svg import render_svg
from .traffic import (
    IDMParams,
    TrafficConfig,
    TrafficManager,
    aggressive_idm,
    conservative_idm,
    idm_accel,
)
from .vehicle import Action, VehicleParams

__version__ = "0.1.0"

__all__ = [
    "Action",
    "BlockType",
    "DrivingEnv",
    "EnvConfig",
    "EpisodeDoneError",
    "EpisodeRecord",
    "IDMParams",
    "LIDAR_RANGE",
    "LaneFollowPolicy",
    "MapConfig",
    "MapGenerationError",
    "Metrics",
    "N_RAYS",
    "OBS_SIZE",
    "RandomPolicy",
    "RewardConfig",
    "RoadNetwork",
    "STEP_DT",
    "StepResult",
    "TerminalState",
    "TrafficConfig",
    "TrafficManager",
    "VehicleParams",
    "ZeroPolicy",
    "aggressive_idm",
    "bench",
    "compute_metrics",
    "compute_reward",
    "conservative_idm",
    "deserialize",
    "generate_map",
    "generate_maps",
    "idm_accel",
    "make_policy",
    "render_svg",
    "run_episode",
    "run_episodes",
    "serialize",
    "single_straight_network",
    "test_seeds",
    "trace_header",
    "trace_line",
    "train_seeds",
]
