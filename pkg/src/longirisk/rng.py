"""Seeded randomness.

All stochastic code takes an explicit ``numpy.random.Generator`` backed by
PCG64, which produces the same stream for the same seed on every platform
numpy supports. Independent streams are derived from a master seed plus a
tuple of keys, so results never depend on the order in which streams are
requested.
"""

from __future__ import annotations

import zlib

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFF
    return zlib.crc32(str(key).encode("utf-8"))


def derive_seed(seed: int, *keys) -> int:
    """A 64-bit child seed determined by ``seed`` and ``keys`` only."""
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(_key_to_int(k) for k in keys))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def derive_rng(seed: int, *keys) -> np.random.Generator:
    return make_rng(derive_seed(seed, *keys))
