"""Deterministic counter-based random number generation.

All randomness in this package flows through SplitMix64, a counter-based
64-bit generator: the i-th raw output of a stream with seed ``s`` is

    mix64((s + (i + 1) * GAMMA) mod 2**64)

where GAMMA = 0x9E3779B97F4A7C15 and mix64 is the finalizer

    z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
    z ^= z >> 27;  z *= 0x94D049BB133111EB
    z ^= z >> 31

Because outputs are a pure function of (seed, counter), streams support
random access and are trivially reproducible across languages.

Stream splitting: the sub-stream for run index k of a master seed m is
seeded with ``derive_seed(m, k)``, defined as the (k+1)-th raw output of
the stream seeded with m.  This is the "64-bit mix of master seed and
run index" recorded in experiment manifests.

Uniforms map a raw output u to ``(u >> 11) * 2**-53`` in [0, 1).
Gaussians use Box-Muller on consecutive uniform pairs, with the first
uniform shifted to (0, 1] as ``((u >> 11) + 1) * 2**-53``; both values
of each pair are always consumed so parallel streams stay aligned.
"""

from __future__ import annotations

import numpy as np

GAMMA = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1

_U64_GAMMA = np.uint64(GAMMA)
_U64_M1 = np.uint64(0xBF58476D1CE4E5B9)
_U64_M2 = np.uint64(0x94D049BB133111EB)

_INV_2_53 = 2.0 ** -53


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a 64-bit integer (pure Python reference)."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def raw_output(seed: int, index: int) -> int:
    """index-th (0-based) raw 64-bit output of the stream with this seed."""
    return mix64((seed + (index + 1) * GAMMA) & _MASK)


def derive_seed(master_seed: int, index: int) -> int:
    """Seed of the index-th sub-stream of master_seed (recorded per run)."""
    return raw_output(master_seed & _MASK, index)


def _raw_block(seed: int, start: int, count: int) -> np.ndarray:
    """Vectorized raw outputs start .. start+count-1 as uint64."""
    base = np.uint64((seed + (start + 1) * GAMMA) & _MASK)
    z = base + _U64_GAMMA * np.arange(count, dtype=np.uint64)
    z = (z ^ (z >> np.uint64(30))) * _U64_M1
    z = (z ^ (z >> np.uint64(27))) * _U64_M2
    return z ^ (z >> np.uint64(31))


class Stream:
    """Sequential view of a SplitMix64 counter stream."""

    def __init__(self, seed: int):
        self.seed = seed & _MASK
        self._pos = 0

    def spawn(self, index: int) -> "Stream":
        """Independent child stream; does not advance this stream."""
        return Stream(derive_seed(self.seed, index))

    def uniforms(self, n: int) -> np.ndarray:
        """n doubles uniform on [0, 1)."""
        raw = _raw_block(self.seed, self._pos, n)
        self._pos += n
        return (raw >> np.uint64(11)).astype(np.float64) * _INV_2_53

    def gaussians(self, n: int) -> np.ndarray:
        """n standard normals via Box-Muller; consumes 2*ceil(n/2) uniforms."""
        pairs = (n + 1) // 2
        raw = _raw_block(self.seed, self._pos, 2 * pairs)
        self._pos += 2 * pairs
        u1 = ((raw[0::2] >> np.uint64(11)).astype(np.float64) + 1.0) * _INV_2_53
        u2 = (raw[1::2] >> np.uint64(11)).astype(np.float64) * _INV_2_53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        out = np.empty(2 * pairs)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:n]

    def integers(self, n: int, bound: int) -> np.ndarray:
        """n integers in [0, bound) by scaling uniforms (bound << 2**53)."""
        return np.minimum(
            (self.uniforms(n) * bound).astype(np.int64), bound - 1
        )
