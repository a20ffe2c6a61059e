"""
Deterministic random sub-streams derived from one scenario seed.

Each named stream gets SeedSequence([seed, crc32(name)]), so adding a stream
never changes the numbers drawn by the others.
"""

import zlib

import numpy as np


def substream_seed(seed: int, name: str) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), zlib.crc32(name.encode("utf-8"))])


def rng_for(seed: int, name: str) -> np.random.Generator:
    """PCG64 generator for the named sub-stream."""
    return np.random.Generator(np.random.PCG64(substream_seed(seed, name)))
