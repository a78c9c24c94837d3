"""Counter-based pseudo-random numbers for reproducible initialization.

The stream is the splitmix64 sequence: the i-th 64-bit output (i >= 1) is

    mix(seed + i * 0x9E3779B97F4A7C15 mod 2^64)

with mix(z): z ^= z >> 30; z *= 0xBF58476D1CE4E5B9; z ^= z >> 27;
z *= 0x94D049BB133111EB; z ^= z >> 31 (all mod 2^64). Uniform doubles take
the top 53 bits: u = (out >> 11) * 2^-53, giving values in [0, 1).
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(state: int) -> int:
    z = state & _MASK
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK
    return z ^ (z >> 31)


class CounterRng:
    """Stateless-per-index generator; draws never depend on array shapes."""

    def __init__(self, seed: int):
        self.seed = seed & _MASK
        self.counter = 0

    def next_u64(self) -> int:
        self.counter += 1
        return splitmix64(self.seed + self.counter * _GOLDEN)

    def next_float(self) -> float:
        return (self.next_u64() >> 11) * 2.0 ** -53

    def uniform(self, shape: tuple[int, ...], low: float = 0.0, high: float = 1.0) -> np.ndarray:
        count = 1
        for dim in shape:
            count *= dim
        values = [low + self.next_float() * (high - low) for _ in range(count)]
        return np.array(values, dtype=np.float64).reshape(shape)
