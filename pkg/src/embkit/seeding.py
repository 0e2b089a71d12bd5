"""Named random sub-streams derived from a single master seed.

Every component (corpus shuffling, init, negative sampling, subsampling, ...)
draws from its own named stream so that toggling one feature does not shift
the randomness consumed by another.
"""

import zlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Return a generator for the sub-stream `name` of master seed `seed`."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, zlib.crc32(name.encode("utf-8"))])
