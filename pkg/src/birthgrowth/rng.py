"""Counter-based random streams.

Every realization draws from its own Philox stream keyed by
``(master_seed, realization_index)``, so a realization can be rebuilt in
isolation and serial and parallel runs see identical numbers.
"""

from __future__ import annotations

import numpy as np


def stream(seed: int, index: int = 0, *extra: int) -> np.random.Generator:
    """Independent generator for ``(seed, index, *extra)``."""
    if seed < 0 or index < 0:
        raise ValueError("seed and index must be nonnegative")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index), *map(int, extra)))
    return np.random.Generator(np.random.Philox(ss))
