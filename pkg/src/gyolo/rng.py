"""Deterministic xoshiro256++ generator for weight initialization.

Each parameter gets its own generator, seeded from a 64-bit FNV-1a hash
of the parameter name mixed with the user seed, so adding or removing a
layer never shifts the initial values of any other layer. The generator
runs xoshiro256++ over a fixed number of parallel lanes (vectorized with
uint64 numpy arithmetic); lane states come from a splitmix64 expansion
of the mixed seed. Output is a pure function of (seed, name, count).
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_LANES = 512


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & _MASK
    return h


def splitmix64_stream(seed: int, count: int) -> np.ndarray:
    out = np.empty(count, dtype=np.uint64)
    x = seed & _MASK
    for i in range(count):
        x = (x + 0x9E3779B97F4A7C15) & _MASK
        z = x
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        out[i] = z ^ (z >> 31)
    return out


def _rotl(x: np.ndarray, k: int) -> np.ndarray:
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


class Xoshiro256pp:
    """Lane-parallel xoshiro256++; draws interleave across lanes."""

    def __init__(self, seed: int, lanes: int = _LANES):
        states = splitmix64_stream(seed, 4 * lanes).reshape(lanes, 4)
        self._s = [np.ascontiguousarray(states[:, i]) for i in range(4)]
        self._lanes = lanes

    def _round(self) -> np.ndarray:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s0 + s3) & np.uint64(_MASK), 23) + s0) & np.uint64(_MASK)
        t = (s1 << np.uint64(17)) & np.uint64(_MASK)
        s2 = s2 ^ s0
        s3 = s3 ^ s1
        s1 = s1 ^ s2
        s0 = s0 ^ s3
        s2 = s2 ^ t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def raw64(self, count: int) -> np.ndarray:
        rounds = -(-count // self._lanes)
        block = np.empty((rounds, self._lanes), dtype=np.uint64)
        for r in range(rounds):
            block[r] = self._round()
        return block.reshape(-1)[:count]

    def uniform(self, count: int, low: float, high: float) -> np.ndarray:
        u = (self.raw64(count) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return (low + u * (high - low)).astype(np.float32)


def param_rng(seed: int, name: str) -> Xoshiro256pp:
    return Xoshiro256pp((seed ^ fnv1a64(name.encode("utf-8"))) & _MASK)
