"""Seeded random streams.

Every simulation call draws from its own :class:`RandomStream`.  Replica and
chain streams are derived from a master seed: the 64-bit integer
``SeedSequence(master_seed, spawn_key=(tag, index)).generate_state(1, uint64)``
seeds ``numpy.random.default_rng``.  The stream of replica ``r`` therefore
does not depend on how many replicas run, in which order, or on how many
workers share the load.
"""

from __future__ import annotations

import math

import numpy as np

# stream tags mixed into the spawn key; keep stable, outputs depend on them
TAG_MEAN_FIELD = 0
TAG_CONDITIONAL = 1
TAG_FREE_MOTION = 2
TAG_GIBBS = 3
TAG_AUX = 4


def replica_seed(master_seed: int, tag: int, index: int) -> int:
    """64-bit seed of stream ``(tag, index)`` under ``master_seed``.

    ``np.random.default_rng(replica_seed(m, tag, r))`` rebuilds the stream, so
    the integer alone (as written to CSV outputs) reproduces a replica.
    """
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(tag), int(index)))
    return int(ss.generate_state(1, np.uint64)[0])


class RandomStream:
    """Buffered uniform source on top of a numpy ``Generator``.

    Scalar draws from ``Generator`` cost about half a microsecond each; the
    event loops consume several per event, so uniforms are pulled in blocks.
    """

    __slots__ = ("generator", "_buf", "_pos", "_block")

    def __init__(self, generator: np.random.Generator, block: int = 256):
        self.generator = generator
        self._block = block
        self._buf: list[float] = []
        self._pos = 0

    @classmethod
    def from_seed(cls, seed) -> "RandomStream":
        return cls(np.random.default_rng(seed))

    @classmethod
    def for_replica(cls, master_seed: int, tag: int, index: int) -> "RandomStream":
        return cls(np.random.default_rng(replica_seed(master_seed, tag, index)))

    def uniform(self) -> float:
        """Uniform on [0, 1)."""
        pos = self._pos
        buf = self._buf
        if pos >= len(buf):
            buf = self._buf = self.generator.random(self._block).tolist()
            pos = 0
        self._pos = pos + 1
        return buf[pos]

    def exponential(self, rate: float) -> float:
        """Exponential waiting time with the given rate (``inf`` if rate is 0)."""
        if rate <= 0.0:
            return math.inf
        return -math.log1p(-self.uniform()) / rate

    def index(self, n: int) -> int:
        """Uniform integer in ``range(n)``."""
        k = int(self.uniform() * n)
        return k if k < n else n - 1

    def normal(self, size) -> np.ndarray:
        return self.generator.standard_normal(size)


def as_stream(rng) -> RandomStream:
    """Coerce a seed, ``Generator`` or ``RandomStream`` to a ``RandomStream``."""
    if isinstance(rng, RandomStream):
        return rng
    if isinstance(rng, np.random.Generator):
        return RandomStream(rng)
    if rng is None:
        raise ValueError("an explicit seed or generator is required")
    return RandomStream.from_seed(rng)
