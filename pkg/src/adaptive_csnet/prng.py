"""Counter-based SplitMix64 random numbers.

Every draw is a pure function of ``(key, counter)``, so streams can be
reproduced exactly in any language that implements 64-bit wrapping
arithmetic::

    z = key + (counter + 1) * 0x9E3779B97F4A7C15
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    z = z ^ (z >> 31)

Uniform doubles use the top 53 bits: ``(z >> 11) * 2**-53``.
"""

from __future__ import annotations

import numpy as np

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def splitmix64(key: int, counters: np.ndarray) -> np.ndarray:
    """Raw 64-bit outputs for an array of counters under ``key``."""
    c = np.asarray(counters, dtype=np.uint64)
    k = np.uint64(key & _MASK64)
    return _mix(k + (c + np.uint64(1)) * GAMMA)


def derive_key(seed: int, *path: int) -> int:
    """Derive an independent stream key from a seed and a path of integers."""
    key = seed & _MASK64
    for p in path:
        key = int(splitmix64(key ^ (p & _MASK64), np.array([0]))[0])
    return key


class Stream:
    """Sequential view over the counter-based generator."""

    def __init__(self, seed: int, *path: int):
        self.key = derive_key(seed, *path)
        self.counter = 0

    def bits(self, n: int) -> np.ndarray:
        out = splitmix64(self.key, np.arange(self.counter, self.counter + n, dtype=np.uint64))
        self.counter += n
        return out

    def uniform(self, n: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        u = (self.bits(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return low + (high - low) * u

    def integers(self, n: int, upper: int) -> np.ndarray:
        """``n`` integers uniform on ``[0, upper)``; multiply-shift on 53-bit uniforms."""
        return np.floor(self.uniform(n) * upper).astype(np.int64)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of ``range(n)``."""
        perm = np.arange(n)
        if n < 2:
            return perm
        draws = self.uniform(n - 1)
        for i in range(n - 1, 0, -1):
            j = int(draws[n - 1 - i] * (i + 1))
            perm[i], perm[j] = perm[j], perm[i]
        return perm
