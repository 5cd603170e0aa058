"""Deterministic 64-bit random stream (splitmix64).

The generator is fully specified here so identical seeds produce identical
simulations on any platform or reimplementation: state advances by the golden
gamma 0x9E3779B97F4A7C15 and each output mixes the state with the standard
splitmix64 finalizer. Floats take the top 53 bits.
"""

from __future__ import annotations

import math

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def _mix(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK
    return z ^ (z >> 31)


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & _MASK
        return _mix(self.state)

    def random(self) -> float:
        """Uniform float in [0, 1)."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def uniform(self, a: float, b: float) -> float:
        return a + (b - a) * self.random()

    def gauss(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        # Box-Muller; one fresh pair per call keeps the stream position simple
        u1 = self.random()
        while u1 == 0.0:
            u1 = self.random()
        u2 = self.random()
        r = math.sqrt(-2.0 * math.log(u1))
        return mu + sigma * r * math.cos(2.0 * math.pi * u2)

    def fork(self, index: int) -> "SplitMix64":
        """Independent child stream derived from this seed and an index."""
        return SplitMix64(_mix((self.state + (index + 1) * _GAMMA) & _MASK))
