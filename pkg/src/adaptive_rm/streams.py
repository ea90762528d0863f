"""Counter-based random streams.

Every random draw in an estimation run comes from a stream addressed by a
tuple of integers, e.g. ``(seed, iteration, generate_iteration, stage)``.
The stream is a Philox generator whose key is derived from that tuple, so
the draws for a given address never depend on the order in which other
streams were consumed or on how work is split across processes.
"""

from __future__ import annotations

import numpy as np

# Stage tags keep streams used for different purposes in the same
# iteration disjoint.
INIT = 0
MOVE = 1
RESAMPLE = 2
AUGMENT = 3
ANTICIPATE = 4
RESEED = 5
AIS_BASE = 6
AIS_CHAIN = 7
DIAG = 8

_MASK64 = (1 << 64) - 1


def stream(seed: int, *counters: int) -> np.random.Generator:
    """Return the generator addressed by ``(seed, *counters)``."""
    ss = np.random.SeedSequence(int(seed) & _MASK64, spawn_key=tuple(int(c) for c in counters))
    key = ss.generate_state(2, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def child_seed(seed: int, k: int) -> int:
    """Seed for replication ``k`` of a batch started at ``seed``."""
    return (int(seed) + int(k)) & _MASK64
