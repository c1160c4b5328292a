"""Counter-based random streams.

Every stream is a Philox generator keyed by ``(seed, *key)`` through
``SeedSequence.spawn_key``, so replication ``r`` draws the same numbers no
matter which thread runs it or in which order replications are scheduled.
"""

from __future__ import annotations

import numpy as np

# stream tags, used as components of a spawn key
DATA = 0
LIMIT_GAMMA = 1
LIMIT_DESIGN = 2
EXTREME = 3
MOMENTS = 4


def substream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & ((1 << 64) - 1), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
