"""Deterministic pseudo-random numbers.

xoshiro256** with splitmix64 seeding. Pure-integer implementation so the
stream is identical on every platform and Python version; every artifact
that depends on randomness records the seed that produced it.
"""

from __future__ import annotations

import math

import numpy as np

_MASK = (1 << 64) - 1
_DOUBLE_SCALE = 2.0 ** -53


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31), state


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK


def mix_seed(seed: int, stream: int) -> int:
    """Fold a stream index (e.g. an epoch number) into a base seed."""
    z, _ = _splitmix64((seed ^ (stream * 0xD2B74407B1CE6E93)) & _MASK)
    return z


class Rng:
    """Seeded generator; identical seed produces an identical stream."""

    def __init__(self, seed: int, stream: int = 0):
        self.seed = seed
        sm = mix_seed(seed & _MASK, stream) if stream else seed & _MASK
        state = []
        for _ in range(4):
            z, sm = _splitmix64(sm)
            state.append(z)
        if not any(state):  # all-zero state is a fixed point of xoshiro
            state[0] = 1
        self._s = state
        self._gauss_cache: float | None = None

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK, 7) * 9) & _MASK
        t = (s1 << 17) & _MASK
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def random(self) -> float:
        """Uniform double in [0, 1)."""
        return (self.next_u64() >> 11) * _DOUBLE_SCALE

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def randbelow(self, n: int) -> int:
        """Unbiased integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError("randbelow requires n > 0")
        limit = _MASK - (_MASK + 1) % n
        while True:
            u = self.next_u64()
            if u <= limit:
                return u % n

    def normal(self) -> float:
        """Standard normal via Box-Muller; pairs cached."""
        if self._gauss_cache is not None:
            z = self._gauss_cache
            self._gauss_cache = None
            return z
        u1 = ((self.next_u64() >> 11) + 1) * _DOUBLE_SCALE  # (0, 1]
        u2 = self.random()
        r = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        self._gauss_cache = r * math.sin(theta)
        return r * math.cos(theta)

    def _raw(self, count: int) -> np.ndarray:
        """count u64 draws as a uint64 array (hot path for bulk sampling)."""
        s0, s1, s2, s3 = self._s
        out = np.empty(count, dtype=np.uint64)
        for i in range(count):
            out[i] = (_rotl((s1 * 5) & _MASK, 7) * 9) & _MASK
            t = (s1 << 17) & _MASK
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return out

    def normals(self, *shape: int) -> np.ndarray:
        """Standard normals via vectorized Box-Muller, same pairing as
        normal() but independent of its cache."""
        size = int(np.prod(shape))
        n_pairs = (size + 1) // 2
        raw = self._raw(2 * n_pairs)
        u1 = ((raw[0::2] >> np.uint64(11)).astype(np.float64) + 1.0) * _DOUBLE_SCALE
        u2 = (raw[1::2] >> np.uint64(11)).astype(np.float64) * _DOUBLE_SCALE
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        out = np.empty(2 * n_pairs, dtype=np.float64)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:size].reshape(shape)

    def uniforms(self, *shape: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        size = int(np.prod(shape))
        raw = (self._raw(size) >> np.uint64(11)).astype(np.float64) * _DOUBLE_SCALE
        return lo + (hi - lo) * raw.reshape(shape)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> np.ndarray:
        idx = list(range(n))
        self.shuffle(idx)
        return np.asarray(idx, dtype=np.int64)

    def sample_indices(self, n_total: int, n: int) -> np.ndarray:
        """First n entries of a partial Fisher-Yates pass over range(n_total)."""
        if n > n_total:
            raise ValueError(f"cannot sample {n} from {n_total}")
        idx = list(range(n_total))
        for i in range(n):
            j = i + self.randbelow(n_total - i)
            idx[i], idx[j] = idx[j], idx[i]
        return np.asarray(idx[:n], dtype=np.int64)

    def choice_weighted(self, weights: np.ndarray) -> int:
        """Index drawn proportionally to non-negative weights."""
        cum = np.cumsum(np.asarray(weights, dtype=np.float64))
        total = cum[-1]
        if total <= 0:
            raise ValueError("weights sum to zero")
        r = self.random() * total
        return int(np.searchsorted(cum, r, side="right"))
