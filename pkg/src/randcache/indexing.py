"""Keyed pseudo-random mapping from line addresses to cache set indices.

The index function stands in for the hardware index encryptor of a
randomized cache.  The threat model treats the encryptor as unbreakable,
so what matters here is statistical quality (uniformity, avalanche,
independence between partitions), not cryptographic strength.  A keyed
64-bit finalizer-style mixer is more than enough for that.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15  # per-partition tweak stride


@dataclass(frozen=True)
class IndexKey:
    """Opaque 128-bit key material for the index function."""

    value: int

    def __post_init__(self):
        if not 0 <= self.value < (1 << 128):
            raise ValueError("key material must be a 128-bit integer")

    @property
    def lo(self) -> int:
        return self.value & _MASK64

    @property
    def hi(self) -> int:
        return (self.value >> 64) & _MASK64


def fresh_key(rng: random.Random) -> IndexKey:
    """Draw a new 128-bit key from a seeded random source."""
    return IndexKey(rng.getrandbits(128))


def mix64(x: int) -> int:
    """64-bit finalizer with full avalanche (splitmix64 style)."""
    x &= _MASK64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _MASK64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _MASK64
    x ^= x >> 31
    return x


def derive_index(key: IndexKey, partition: int, addr: int, sets: int) -> int:
    """Map (key, partition, line address) to a set index in [0, sets).

    Pure function of its arguments.  `sets` must be a power of two; the
    index is the truncation of the mixed 64-bit word.
    """
    if sets & (sets - 1):
        raise ValueError("set count must be a power of two")
    x = (addr ^ key.lo) + key.hi + partition * _GOLDEN
    return mix64(x) & (sets - 1)


def index_tuple(key: IndexKey, addr: int, sets: int, partitions: int) -> tuple[int, ...]:
    """Set index of `addr` in every partition, as a tuple."""
    lo = key.lo
    base = key.hi
    mask = sets - 1
    return tuple(
        mix64((addr ^ lo) + base + j * _GOLDEN) & mask for j in range(partitions)
    )


def index_matrix(key: IndexKey, addrs, sets: int, partitions: int):
    """Vectorized index_tuple: (n,) uint64 addresses -> (n, K) indices.

    Same mixer as derive_index, evaluated with wrapping uint64 numpy
    arithmetic; used by experiment scaffolding that classifies large
    address batches (congruence sampling, uniformity tests).
    """
    import numpy as np

    a = np.asarray(addrs, dtype=np.uint64)
    out = np.empty((a.shape[0], partitions), dtype=np.int64)
    lo = np.uint64(key.lo)
    for j in range(partitions):
        x = (a ^ lo) + np.uint64((key.hi + j * _GOLDEN) & _MASK64)
        x ^= x >> np.uint64(30)
        x *= np.uint64(0xBF58476D1CE4E5B9)
        x ^= x >> np.uint64(27)
        x *= np.uint64(0x94D049BB133111EB)
        x ^= x >> np.uint64(31)
        out[:, j] = (x & np.uint64(sets - 1)).astype(np.int64)
    return out
