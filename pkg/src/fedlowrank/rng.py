"""Seeded counter-based random streams.

Every consumer draws from its own Philox stream keyed by ``(seed, stream, *path)``
so that adding draws in one place never shifts the numbers seen elsewhere.
"""

from __future__ import annotations

import numpy as np

DATA = 0
VARTHETA = 1
CLIENT_SAMPLING = 2
SGD = 3
MONTE_CARLO = 4
PROBE = 5
CHECKS = 6
MODEL = 7


def stream(seed: int, stream_id: int, *path: int) -> np.random.Generator:
    if seed < 0:
        raise ValueError("seed must be a non-negative integer")
    seq = np.random.SeedSequence(int(seed), spawn_key=(int(stream_id), *map(int, path)))
    return np.random.Generator(np.random.Philox(seq))
