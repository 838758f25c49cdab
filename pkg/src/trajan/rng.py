"""Deterministic pseudo-random streams based on SplitMix64.

All synthetic data in this package is derived from SplitMix64 (Steele,
Lea & Flood's 64-bit shift/multiply mixer), chosen because it is tiny,
fast to evaluate out of order, and has well-known reference outputs:
seeding with 0 must yield 0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4,
0x06C45D188009454F, ... which the test suite asserts.

The i-th output of a stream is a pure function of ``(seed, i)``, so
streams can be generated in vectorized blocks and independent substreams
can be derived without sharing state.
"""

from __future__ import annotations

import numpy as np

_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_MASK = (1 << 64) - 1

# numpy integer ops on uint64 wrap modulo 2**64, which is exactly the
# arithmetic SplitMix64 is defined over
_ERR = {"over": "ignore"}


def mix64(z: int) -> int:
    """Scalar SplitMix64 finalizer; used to derive substream seeds."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return (z ^ (z >> 31)) & _MASK


def substream_seed(seed: int, index: int) -> int:
    """Seed for the ``index``-th independent substream of ``seed``.

    Equals the ``index``-th raw output of a SplitMix64 stream seeded with
    ``seed``, so substreams are as statistically independent as
    consecutive draws.
    """
    return mix64((seed + (index + 1) * _GAMMA) & _MASK)


def random_u64(seed: int, count: int, offset: int = 0) -> np.ndarray:
    """``count`` raw 64-bit outputs of the stream, starting at ``offset``."""
    idx = np.arange(offset + 1, offset + count + 1, dtype=np.uint64)
    with np.errstate(**_ERR):
        z = np.uint64(seed & _MASK) + idx * np.uint64(_GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))


def random_doubles(seed: int, count: int, offset: int = 0) -> np.ndarray:
    """Uniform float64 in [0, 1), from the top 53 bits of each output."""
    u = random_u64(seed, count, offset) >> np.uint64(11)
    return u.astype(np.float64) * (1.0 / (1 << 53))


def random_uniform(
    seed: int, count: int, low: float, high: float, offset: int = 0
) -> np.ndarray:
    """Uniform float64 in [low, high)."""
    return low + random_doubles(seed, count, offset) * (high - low)
