"""Deterministic random streams.

All randomness in the package flows through PCG64 generators derived from a
64-bit seed plus a named stream index. Splitting map and traffic randomness
into separate streams keeps map layouts byte-stable when traffic logic
changes, and vice versa.
"""

from __future__ import annotations

import numpy as np

MAP_STREAM = 0
TRAFFIC_STREAM = 1
POLICY_STREAM = 2


def make_rng(seed: int, stream: int) -> np.random.Generator:
    """Generator for (seed, stream); identical inputs give identical draws."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.PCG64(seq))


def rand_uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    return float(rng.uniform(lo, hi))


def rand_int(rng: np.random.Generator, lo: int, hi: int) -> int:
    """Uniform integer in [lo, hi] inclusive."""
    return int(rng.integers(lo, hi + 1))


def rand_choice(rng: np.random.Generator, items):
    """Uniform choice implemented via integers for cross-version stability."""
    return items[rand_int(rng, 0, len(items) - 1)]
