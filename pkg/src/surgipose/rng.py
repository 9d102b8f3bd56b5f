"""Reproducible random streams for dataset generation.

All randomness flows through Philox4x64, a counter-based generator whose
output is fully determined by (key, counter) and identical across platforms
and runs.  The dataset seed is the key; the replay index is placed in the
top 64-bit word of the 256-bit counter, so every replay gets a disjoint
substream and datasets are reproducible byte for byte from (seed, replay).
"""

import numpy as np

from .errors import InvalidParam

_KEY_MASK = (1 << 128) - 1


def replay_rng(seed: int, replay_index: int) -> np.random.Generator:
    """Return the generator for one trajectory replay.

    Deterministic: equal (seed, replay_index) always yields the same stream.
    """
    if replay_index < 0:
        raise InvalidParam(f"replay_index must be >= 0, got {replay_index}")
    bitgen = np.random.Philox(key=int(seed) & _KEY_MASK, counter=int(replay_index) << 192)
    return np.random.Generator(bitgen)
