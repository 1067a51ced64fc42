"""Counter-based random streams.

Every augmentation draw is keyed by ``(global_seed, graph_id, epoch, slot)``
so that views are reproducible regardless of batch composition or the order
in which graphs are visited. The generator is splitmix64 evaluated at
successive counter values; the compiled kernels implement the same mixing
function so both backends consume identical streams.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB
_TWO_M53 = 1.0 / 9007199254740992.0


def mix64(z: int) -> int:
    """splitmix64 output finalizer on a Python int."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MUL1) & MASK64
    z = ((z ^ (z >> 27)) * _MUL2) & MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MUL1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MUL2)
    return z ^ (z >> np.uint64(31))


def hash64(*parts: int) -> int:
    h = 0x243F6A8885A308D3
    for p in parts:
        h = mix64(((h ^ (int(p) & MASK64)) + GOLDEN) & MASK64)
    return h


def uniform_at(key: int, counter: int) -> float:
    """The ``counter``-th uniform of the stream with ``key`` (scalar path)."""
    z = mix64((key + (counter + 1) * GOLDEN) & MASK64)
    return (z >> 11) * _TWO_M53


class RngStream:
    """Deterministic stream of uniforms in [0, 1).

    Two streams built from the same seed tuple yield the same sequence.
    """

    __slots__ = ("key", "counter")

    def __init__(self, global_seed: int, graph_id: int = 0, epoch: int = 0, slot: int = 0):
        self.key = hash64(global_seed, graph_id, epoch, slot)
        self.counter = 0

    @classmethod
    def from_key(cls, key: int) -> "RngStream":
        s = cls.__new__(cls)
        s.key = key & MASK64
        s.counter = 0
        return s

    def uniforms(self, k: int) -> np.ndarray:
        if k <= 0:
            return np.zeros(0)
        idx = np.arange(self.counter + 1, self.counter + k + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.key) + idx * np.uint64(GOLDEN)
            z = _mix64_array(z)
        self.counter += k
        return (z >> np.uint64(11)).astype(np.float64) * _TWO_M53

    def uniform(self) -> float:
        u = uniform_at(self.key, self.counter)
        self.counter += 1
        return u

    def randint(self, n: int) -> int:
        """Uniform integer in ``[0, n)``."""
        return min(int(self.uniform() * n), n - 1)

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.uniforms(n), kind="stable")

    def sample(self, n: int, k: int) -> np.ndarray:
        """``k`` distinct indices drawn uniformly from ``range(n)``, sorted."""
        if k <= 0:
            return np.zeros(0, dtype=np.int64)
        return np.sort(self.permutation(n)[:k]).astype(np.int64)
