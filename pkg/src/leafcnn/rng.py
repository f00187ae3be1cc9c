"""Deterministic seeded randomness.

The generator is SplitMix64 run in counter mode: the i-th raw 64-bit output
is ``mix64(key + (i + 1) * GOLDEN)`` where ``mix64`` is the SplitMix64
finalizer (Steele, Lea & Flood 2014) and GOLDEN is 2^64 / phi rounded to odd.
Because each output depends only on (key, i), a whole block of draws is one
vectorized uint64 expression, and the sequence is identical on every platform
and in every language that reproduces the two constants and the shift/multiply
chain below.

Child generators are derived by hashing a tag into the parent key
(``child_key = mix64(key ^ mix64(tag ^ CHILD_SALT))``), so parallel workers
can draw from disjoint, order-independent streams.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ParameterError

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
CHILD_SALT = np.uint64(0x5851F42D4C957F2D)

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_TWO53 = float(1 << 53)


def _mix64(z: np.ndarray | np.uint64) -> np.ndarray | np.uint64:
    """SplitMix64 finalizer: avalanche a 64-bit word (wrapping multiplies)."""
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


class Rng:
    """Counter-based SplitMix64 stream; identical seed => identical outputs."""

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._key = np.uint64(self.seed)
        self._counter = 0

    def __repr__(self):
        return f"Rng(seed={self.seed}, counter={self._counter})"

    def child(self, tag: int) -> "Rng":
        """Derive an independent stream for worker/sample ``tag``."""
        tagged = _mix64(np.uint64(int(tag) & 0xFFFFFFFFFFFFFFFF) ^ CHILD_SALT)
        child = Rng(0)
        child._key = _mix64(self._key ^ tagged)
        child.seed = int(child._key)
        return child

    def raw(self, n: int) -> np.ndarray:
        """Next ``n`` raw uint64 words."""
        if n < 0:
            raise ParameterError(f"draw count must be >= 0, got {n}")
        with np.errstate(over="ignore"):
            idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
            out = _mix64((self._key + idx * GOLDEN) & _MASK)
        self._counter += n
        return out

    def uniform(self, n: int) -> np.ndarray:
        """``n`` doubles in [0, 1), 53-bit resolution."""
        return (self.raw(n) >> np.uint64(11)).astype(np.float64) / _TWO53

    def normal(self, mean: float, std: float, n: int) -> np.ndarray:
        """``n`` i.i.d. normal draws via Box-Muller (pairs; trailing draw dropped)."""
        if std < 0:
            raise ParameterError(f"std must be >= 0, got {std}")
        if n == 0:
            return np.empty(0)
        if std == 0:
            return np.full(n, float(mean))
        m = (n + 1) // 2
        # u1 in (0, 1] so log() is finite
        u1 = ((self.raw(m) >> np.uint64(11)).astype(np.float64) + 1.0) / _TWO53
        u2 = self.uniform(m)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = (2.0 * math.pi) * u2
        z = np.empty(2 * m)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        return mean + std * z[:n]

    def integers(self, n: int, bound: int) -> np.ndarray:
        """``n`` ints in [0, bound) by 128-bit multiply-shift (tiny, uniform mod bias-free)."""
        if bound <= 0:
            raise ParameterError(f"bound must be positive, got {bound}")
        words = self.raw(n)
        # Lemire reduction without rejection: (word * bound) >> 64, exact via object ints
        return np.array([(int(w) * bound) >> 64 for w in words], dtype=np.int64)

    def permutation(self, n: int) -> np.ndarray:
        """Deterministic permutation of range(n) (argsort of raw keys)."""
        return np.argsort(self.raw(n), kind="stable")

    def shuffle(self, items: list) -> list:
        """Return ``items`` reordered by a fresh permutation."""
        return [items[i] for i in self.permutation(len(items))]
