"""SplitMix64: a counter-based 64-bit xorshift-multiply generator.

The n-th output (n starting at 1) for a seed is ``mix(seed + n * GAMMA)`` with

    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    z =  z ^ (z >> 31)

all modulo 2**64. Being counter-based, any slice of the stream can be
generated in one vectorized step, and other languages reproduce it with
plain unsigned 64-bit arithmetic.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
MUL1 = 0xBF58476D1CE4E5B9
MUL2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * MUL1) & MASK64
    z = ((z ^ (z >> 27)) * MUL2) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, label: str) -> int:
    """Independent sub-stream seed for a named purpose."""
    h = seed & MASK64
    for byte in label.encode("utf-8"):
        h = mix64(h ^ byte)
    return h


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GAMMA) & MASK64
        return mix64(self.state)

    def below(self, n: int) -> int:
        """Integer in [0, n) by modulo reduction (bias < n / 2**64)."""
        return self.next_u64() % n


def block(seed: int, n: int, start: int = 0) -> np.ndarray:
    """Outputs start+1 .. start+n of the stream for ``seed`` as uint64."""
    with np.errstate(over="ignore"):
        counters = np.arange(start + 1, start + n + 1, dtype=np.uint64)
        z = np.uint64(seed & MASK64) + counters * np.uint64(GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(MUL1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(MUL2)
        return z ^ (z >> np.uint64(31))


def unit_floats(seed: int, n: int, start: int = 0) -> np.ndarray:
    """Floats in (0, 1] from the top 53 bits of each output."""
    return ((block(seed, n, start) >> np.uint64(11)).astype(np.float64) + 1.0) * (2.0 ** -53)
