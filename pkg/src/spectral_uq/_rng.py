"""Counter-style random number generation.

Every stochastic routine in this package draws from a Philox generator keyed
by an explicit tuple of integers, so results are reproducible bit for bit and
independent of evaluation order (per-sample streams never interact).
"""

from __future__ import annotations

import numpy as np


def keyed_rng(seed: int, *subkeys: int) -> np.random.Generator:
    """Return a Generator for the stream identified by (seed, *subkeys).

    Identical keys always produce identical streams; distinct keys produce
    statistically independent streams.
    """
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF,
                                spawn_key=tuple(int(k) for k in subkeys))
    return np.random.Generator(np.random.Philox(ss))
