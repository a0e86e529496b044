"""Seeded random streams with deterministic child derivation."""

from __future__ import annotations

import numpy as np


class RngStream:
    """A PCG64 generator pinned to a 64-bit seed.

    Streams are not meant to be shared between concurrent consumers; use
    :meth:`child` to derive an independent stream per job.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def child(self, *keys) -> "RngStream":
        words = [self.seed & 0xFFFFFFFF, self.seed >> 32]
        for key in keys:
            if isinstance(key, str):
                words.extend(key.encode("utf-8"))
            else:
                words.append(int(key) & 0xFFFFFFFF)
        state = np.random.SeedSequence(words).generate_state(2, np.uint32)
        return RngStream(int(state[0]) | (int(state[1]) << 32))

    def random(self, shape=None) -> np.ndarray:
        return self._gen.random(shape)

    def uniform(self, low: float, high: float, shape=None) -> np.ndarray:
        return self._gen.uniform(low, high, shape)

    def normal(self, loc: float = 0.0, scale: float = 1.0, shape=None) -> np.ndarray:
        return self._gen.normal(loc, scale, shape)

    def integers(self, low: int, high: int | None = None, shape=None) -> np.ndarray:
        return self._gen.integers(low, high, shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self._gen.choice(n, size=size, replace=replace)

    def __repr__(self):
        return f"RngStream(seed={self.seed})"
