"""
rng.py - Seeded random streams

Every stochastic operation takes a numpy Generator explicitly. Streams are
PCG64 generators; independent streams are derived from a master seed with
SeedSequence.spawn so results do not depend on the order workers run in.
"""

from typing import List, Optional

import numpy as np


def make_rng(seed: Optional[int] = 0) -> np.random.Generator:
    """Create a PCG64 generator from an integer seed."""
    return np.random.Generator(np.random.PCG64(seed))


def spawn_rngs(seed: Optional[int], count: int) -> List[np.random.Generator]:
    """Derive `count` independent generators from one master seed."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.Generator(np.random.PCG64(child)) for child in children]


def choice_by_weight(rng: np.random.Generator, weights: np.ndarray) -> int:
    """
    Draw an index with probability proportional to `weights`.

    Falls back to uniform when every weight is zero. Weights must be
    non-negative and finite.
    """
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    if weights.size == 0:
        raise ValueError("cannot sample from an empty weight vector")
    if total <= 0.0:
        return int(rng.integers(weights.size))
    return int(rng.choice(weights.size, p=weights / total))
