"""Counter-based random streams.

Every stochastic choice in a run is drawn from a Philox generator keyed by
(seed, tag, counter).  Streams are pure functions of their key, so a replay
of iteration k sees exactly the random draws the original run saw at k,
regardless of what happened in between.
"""

from __future__ import annotations

import numpy as np

# Stream tags.  Keep values stable: they are part of run reproducibility.
TAG_INIT = 0
TAG_STEP = 1
TAG_FAILURE = 2
TAG_CKPT = 3
TAG_PERTURB = 4
TAG_DATA = 5


def substream(seed: int, *path: int) -> np.random.Generator:
    """Return a generator keyed by (seed, *path).

    Identical keys give bitwise-identical streams; distinct keys give
    statistically independent ones.
    """
    key = (int(seed),) + tuple(int(p) for p in path)
    if any(k < 0 for k in key):
        raise ValueError(f"stream key components must be non-negative, got {key}")
    return np.random.Generator(np.random.Philox(seed=np.random.SeedSequence(key)))
