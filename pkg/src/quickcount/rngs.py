"""Counter-derived RNG streams.

Every stochastic component takes a master seed plus an index path
(replicate, imputation chain, repetition, ...) and builds an independent
numpy generator from the concatenated entropy, so results are reproducible
regardless of execution order or worker count.
"""

from __future__ import annotations

import numpy as np


def entropy(seed, *path) -> list[int]:
    if isinstance(seed, (list, tuple)):
        base = [int(s) for s in seed]
    else:
        base = [int(seed)]
    return base + [int(p) for p in path]


def stream(seed, *path) -> np.random.Generator:
    return np.random.default_rng(entropy(seed, *path))
