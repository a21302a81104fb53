"""Deterministic 64-bit pseudo-random streams (SplitMix64).

All randomness in the package flows through :class:`RngState` so that every
experiment is a pure function of its master seed.  The generator is the
SplitMix64 sequence: the state advances by the golden-ratio increment and the
output is the three-round xor-multiply finalizer.  Constants are the standard
published ones:

    GOLDEN = 0x9E3779B97F4A7C15
    MIX1   = 0xBF58476D1CE4E5B9
    MIX2   = 0x94D049BB133111EB

``mix64`` exposes the finalizer on its own; keyed hashing elsewhere
(watermark PRF, g-scores) folds values into a key one ``mix64`` round per
value.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB


def mix64(x: int) -> int:
    """SplitMix64 finalizer: a 64-bit permutation with near-ideal avalanche."""
    x &= MASK64
    x ^= x >> 30
    x = (x * MIX1) & MASK64
    x ^= x >> 27
    x = (x * MIX2) & MASK64
    x ^= x >> 31
    return x


def fold(h: int, value: int) -> int:
    """Fold one integer into a 64-bit hash state (one finalizer round)."""
    return mix64(h ^ (((value + 1) * GOLDEN) & MASK64))


def fold_seq(h: int, values) -> int:
    for v in values:
        h = fold(h, v)
    return h


def mix64_np(x: np.ndarray) -> np.ndarray:
    """Vectorized ``mix64`` over a uint64 array."""
    x = x.astype(np.uint64, copy=True)
    x ^= x >> np.uint64(30)
    x *= np.uint64(MIX1)
    x ^= x >> np.uint64(27)
    x *= np.uint64(MIX2)
    x ^= x >> np.uint64(31)
    return x


def fold_np(h: int, values: np.ndarray) -> np.ndarray:
    """Vectorized ``fold`` of many values into the same hash state."""
    v = (values.astype(np.uint64) + np.uint64(1)) * np.uint64(GOLDEN)
    return mix64_np(np.uint64(h) ^ v)


class RngState:
    """SplitMix64 stream; identical seed implies identical stream."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        return mix64(self.state)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def randrange(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection (no modulo bias)."""
        if n <= 0:
            raise ValueError("randrange needs n >= 1")
        limit = MASK64 - (MASK64 + 1) % n
        while True:
            u = self.next_u64()
            if u <= limit:
                return u % n

    def choice(self, seq):
        return seq[self.randrange(len(seq))]

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.randrange(i + 1)
            items[i], items[j] = items[j], items[i]

    def geometric(self, mean: float) -> int:
        """Number of failures before the first success, E[X] = mean (>= 0)."""
        if mean <= 0:
            return 0
        p = 1.0 / (1.0 + mean)
        u = self.random()
        # Inverse CDF of the geometric-on-{0,1,...} distribution.
        return int(math.floor(math.log1p(-u) / math.log1p(-p)))

    def sample_categorical(self, probs) -> int:
        """Index sampled from a probability vector (sums to ~1)."""
        u = self.random()
        acc = 0.0
        for i, p in enumerate(probs):
            acc += p
            if u < acc:
                return i
        return len(probs) - 1

    def derive(self, *labels) -> "RngState":
        """Independent child stream keyed by integer/string labels."""
        h = self.state
        for lab in labels:
            if isinstance(lab, str):
                for b in lab.encode("utf-8"):
                    h = fold(h, b)
                h = fold(h, 0x5EED)
            else:
                h = fold(h, int(lab))
        return RngState(h)
