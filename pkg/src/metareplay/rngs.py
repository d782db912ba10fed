"""Root-seed to named child RNG streams.

Each consumer (init, stream shuffle, memory writes, memory sampling, MTL
pooling) gets its own generator so toggling one feature never perturbs the
random draws of another.
"""

from __future__ import annotations

import numpy as np

STREAM_NAMES = ("init", "stream", "memory_write", "memory_sample", "mtl")


def named_rngs(seed: int) -> dict:
    children = np.random.SeedSequence(seed).spawn(len(STREAM_NAMES))
    return {name: np.random.default_rng(child)
            for name, child in zip(STREAM_NAMES, children)}
