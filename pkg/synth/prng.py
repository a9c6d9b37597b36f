"""
SplitMix64 - the seeded generator behind every synthetic sample.

    state <- state + 0x9E3779B97F4A7C15            (mod 2^64)
    z <- (state ^ (state >> 30)) * 0xBF58476D1CE4E5B9
    z <- (z ^ (z >> 27)) * 0x94D049BB133111EB
    out = z ^ (z >> 31)
Floats take the top 53 bits: (out >> 11) * 2^-53, in [0, 1).

The scalar and array paths produce the same stream, so drawing k values
one at a time or with uniform_array(k) leaves the generator in the same
state with the same values.
"""

from typing import Sequence, TypeVar

import numpy as np

GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MIX_1 = 0xBF58476D1CE4E5B9
MIX_2 = 0x94D049BB133111EB
MASK_64 = (1 << 64) - 1
_UNIT = 1.0 / (1 << 53)

T = TypeVar("T")


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * MIX_1) & MASK_64
    z = ((z ^ (z >> 27)) * MIX_2) & MASK_64
    return z ^ (z >> 31)


class SplitMix64:
    def __init__(self, seed: int):
        self.state = int(seed) & MASK_64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK_64
        return _mix(self.state)

    def random(self) -> float:
        return (self.next_u64() >> 11) * _UNIT

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def integer(self, low: int, high: int) -> int:
        """Uniform integer in [low, high], both inclusive."""
        if high < low:
            raise ValueError(f"empty range [{low}, {high}]")
        return low + int(self.random() * (high - low + 1))

    def choice(self, options: Sequence[T]) -> T:
        return options[self.integer(0, len(options) - 1)]

    def uniform_array(self, count: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """count draws in stream order, vectorised with wrapping uint64 arithmetic."""
        steps = np.arange(1, count + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + steps * np.uint64(GOLDEN_GAMMA)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX_1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX_2)
            z = z ^ (z >> np.uint64(31))
        self.state = (self.state + count * GOLDEN_GAMMA) & MASK_64
        unit = (z >> np.uint64(11)).astype(np.float64) * _UNIT
        return low + (high - low) * unit
