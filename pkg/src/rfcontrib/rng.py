"""Counter-based 64-bit random streams.

Every tree draws from its own stream so that trees can be grown in any order
(or in parallel) and still be bit-identical to a sequential run. The stream
for tree ``j`` of a forest trained with ``seed`` starts at::

    state_0 = splitmix64(splitmix64(seed) ^ j)

and each draw advances ``state += 0x9E3779B97F4A7C15`` and returns
``mix(state)``. ``uniform`` uses the top 53 bits of a draw. This function is
part of the persisted model contract (``rng`` field of the model header).
"""

from __future__ import annotations

import numpy as np

RNG_NAME = "splitmix64-v1"

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def splitmix64(x: int) -> int:
    return mix64((x + GOLDEN) & MASK64)


def tree_seed(seed: int, tree_index: int) -> int:
    """Initial stream state for one tree."""
    return splitmix64(splitmix64(seed & MASK64) ^ (tree_index & MASK64))


class SplitMixStream:
    """Pure-Python twin of the stream used inside the compiled kernels."""

    def __init__(self, state: int):
        self.state = state & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        return mix64(self.state)

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def randint(self, n: int) -> int:
        return int(self.uniform() * n)


def state_array(state: int) -> np.ndarray:
    return np.array([state & MASK64], dtype=np.uint64)
