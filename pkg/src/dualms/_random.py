"""Seed plumbing.

Every stochastic step draws from a Philox stream keyed by the run seed plus a
stable tuple of labels, so stages can be re-run independently and stay
bitwise reproducible.
"""
import zlib

import numpy as np


def _key(part):
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    return zlib.crc32(str(part).encode("utf-8"))


def make_rng(seed, *labels):
    """Return an independent generator for ``(seed, *labels)``."""
    if isinstance(seed, np.random.Generator):
        return seed
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF,
                                spawn_key=tuple(_key(p) for p in labels))
    return np.random.Generator(np.random.Philox(ss))
