"""Counter-based random streams keyed by ``(seed, *indices)``.

Each scan point draws from its own Philox stream, so a dataset is the same
whether its points are generated sequentially or concurrently.
"""

import numpy as np


def point_rng(seed: int, *key: int) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))
