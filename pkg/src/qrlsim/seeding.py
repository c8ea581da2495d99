"""Reproducible random streams for ensemble simulation.

Derivation scheme (stable, documented so other implementations can mirror
it): the stream for agent ``i`` under master seed ``s`` is a counter-based
Philox generator keyed by ``SeedSequence(s, spawn_key=(i,))``.  Distinct
agent indices give statistically independent streams; the same
``(seed, index)`` pair always reproduces the same stream.  Philox has period
2**256 per key, so no realistic draw count revisits internal state.

All simulation code draws through :class:`RngStream`, which consumes a
buffered uniform sequence.  Uniform integers below ``n`` are taken as
``floor(u * n)``; this convention is part of the reproducibility contract.
"""

from __future__ import annotations

import numpy as np


def derive_rng(master_seed: int, agent_index: int) -> np.random.Generator:
    """Independent, reproducible per-agent generator."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(agent_index,))
    return np.random.Generator(np.random.Philox(ss))


class RngStream:
    """Buffered uniform draws on top of a numpy Generator.

    The consumption order of uniforms fully determines every simulated
    decision, so two code paths that draw identically behave identically.
    """

    __slots__ = ("_gen", "_buf", "_pos", "_block")

    def __init__(self, gen: np.random.Generator, block: int = 4096):
        self._gen = gen
        self._block = block
        self._buf = gen.random(block)
        self._pos = 0

    def uniform(self) -> float:
        pos = self._pos
        if pos == self._block:
            self._buf = self._gen.random(self._block)
            pos = 0
        self._pos = pos + 1
        return self._buf[pos]

    def randint_below(self, n: int) -> int:
        """Uniform integer in [0, n) as floor(u * n)."""
        v = int(self.uniform() * n)
        return n - 1 if v == n else v  # guard the u -> 1.0 rounding edge


def as_stream(rng) -> RngStream:
    """Accept a Generator, an integer seed, or an existing stream."""
    if isinstance(rng, RngStream):
        return rng
    if isinstance(rng, np.random.Generator):
        return RngStream(rng)
    return RngStream(np.random.Generator(np.random.Philox(np.random.SeedSequence(rng))))
