"""Seedable, platform-independent random streams for walk randomization.

The walk kernels are JIT-compiled and must consume exactly the same random
stream as the pure-Python reference path, so both use SplitMix64 (Steele,
Lea & Flood 2014).  Seed derivation for batches goes through
:class:`numpy.random.SeedSequence`.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def splitmix64_mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, counter: int) -> int:
    """Return the ``counter``-th output of the SplitMix64 stream seeded by ``master``."""
    return splitmix64_mix((master + (counter + 1) * GOLDEN_GAMMA) & MASK64)


class SplitMix64:
    """Minimal 64-bit generator with exact rejection sampling."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = int(seed) & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        return splitmix64_mix(self.state)

    def randbelow(self, n: int) -> int:
        """Uniform integer in ``[0, n)``; works for arbitrary-width ``n``."""
        if n < 1:
            raise ValueError("randbelow needs n >= 1")
        if n == 1:
            return 0
        k = (n - 1).bit_length()
        words = (k + 63) // 64
        mask = (1 << k) - 1
        while True:
            x = 0
            for _ in range(words):
                x = (x << 64) | self.next_u64()
            x &= mask
            if x < n:
                return x


def spawn_seeds(master: int, count: int) -> list[int]:
    """Independent 64-bit seeds for ``count`` runs, derived from ``master``."""
    ss = np.random.SeedSequence(int(master) & MASK64)
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in ss.spawn(count)]
