"""Seeded random streams.

Every random draw in the package comes from ``stream(seed, *keys)``: the
same (seed, keys) always yields the same generator, and distinct keys give
statistically independent streams. Replicate ``k`` of a study uses key
``k``, so results do not depend on how replicates are split across workers.
"""
from __future__ import annotations

import numpy as np


def stream(seed: int, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def chunk_ranges(total: int, size: int):
    """Yield (index, start, stop) blocks covering range(total)."""
    for idx, start in enumerate(range(0, total, size)):
        yield idx, start, min(start + size, total)


def derive(seed: int, *keys: int) -> int:
    """Child integer seed for a sub-experiment identified by keys."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
