"""Deterministic, splittable random streams.

Every stochastic choice in a run (parameter init, dropout masks, batch
shuffling, data splits) draws from a stream derived from the single run
seed plus a string/int path. Streams are independent Philox generators,
so resuming a run at epoch e can rebuild the exact epoch-e+1 streams
without replaying earlier epochs.
"""

from __future__ import annotations

import zlib

import numpy as np


def _encode(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    raise TypeError(f"rng path parts must be int or str, got {type(part).__name__}")


def stream(seed: int, *path) -> np.random.Generator:
    """Return the generator for `path` under `seed` (same path, same stream)."""
    key = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_encode(p) for p in path))
    return np.random.Generator(np.random.Philox(key))
