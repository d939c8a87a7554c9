"""Counter-based seed derivation.

Every random stream is keyed by ``(master, replication, block, component)``.
The key is folded into one 64-bit word with the splitmix64 finaliser and fed
to a Philox generator, so results never depend on execution order.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    x = (x + _GOLDEN) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def derive_seed(master: int, replication: int = 0, block: int = 0, component: int = 0) -> int:
    """``H(master, i, n, k)``: chained splitmix64 over the four counters."""
    h = 0
    for part in (master, replication, block, component):
        if part < 0:
            raise ValueError("seed counters must be nonnegative")
        h = splitmix64(h ^ (int(part) & _MASK))
    return h


def derived_rng(master: int, replication: int = 0, block: int = 0, component: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=derive_seed(master, replication, block, component)))
