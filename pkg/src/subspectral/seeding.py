"""Counter-based RNG streams so every stage is reproducible in isolation.

Streams are Philox generators keyed by (seed, stream id); fixed ids keep
weight init, dropout, shuffling, and synthesis independent of each other.
"""

from __future__ import annotations

import numpy as np

STREAM_INIT = 2**62
STREAM_DROPOUT = 2**62 + 1
STREAM_SYNTH = 2**62 + 2


def philox_rng(seed: int, stream: int) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, stream & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def epoch_rng(seed: int, epoch: int) -> np.random.Generator:
    """Shuffle stream for one epoch; independent of all other streams."""
    return philox_rng(seed, epoch)
