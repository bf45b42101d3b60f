"""Seed derivation shared by every stochastic stage.

Every random draw in a run is reachable only from the master seed through
``derive_seed(master_seed, namespace, device_id, frame_index, attempt)``.
The derivation is a ``numpy.random.SeedSequence`` keyed by the tuple, so
serial and parallel generation see the same streams.
"""

from __future__ import annotations

from enum import IntEnum

import numpy as np

_SEED_MASK = (1 << 63) - 1


class SeedNamespace(IntEnum):
    """Disjoint tags keeping data, channel and noise draws uncorrelated."""

    POPULATION = 1
    TRAIN_PRBS = 2
    TRAIN_CHANNEL = 3
    TRAIN_NOISE = 4
    EVAL_PRBS = 5
    EVAL_CHANNEL = 6
    EVAL_NOISE = 7
    MODEL_INIT = 8
    SHUFFLE = 9
    PREAMBLE = 10


def derive_seed(
    master_seed: int,
    namespace: int,
    device_id: int = 0,
    frame_index: int = 0,
    attempt: int = 0,
) -> int:
    """Mix the master seed with an item key into a non-negative 63-bit seed.

    63 bits keep every derived seed representable in an int64 CSV column.
    """
    if master_seed < 0:
        raise ValueError(f"master_seed must be >= 0, got {master_seed}")
    sequence = np.random.SeedSequence(
        entropy=master_seed,
        spawn_key=(int(namespace), device_id, frame_index, attempt),
    )
    high, low = sequence.generate_state(2, dtype=np.uint32)
    return ((int(high) << 32) | int(low)) & _SEED_MASK


def item_rng(seed: int, *key: int) -> np.random.Generator:
    """Return an independent generator for one item under ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))
