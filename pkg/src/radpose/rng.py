"""Seeded random source used by every stochastic component.

A single root seed flows through the whole pipeline; child streams are
derived with SeedSequence spawn keys so that per-frame / per-window work
is reproducible regardless of evaluation order or worker count.
"""

from __future__ import annotations

import numpy as np


class Rng:
    """Deterministic random stream (PCG64) with hierarchical derivation."""

    def __init__(self, seed: int, _key: tuple[int, ...] = ()):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._key = tuple(int(k) for k in _key)
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=self._key))
        )

    def derive(self, *tags: int) -> "Rng":
        """Child stream for (seed, *tags); independent of draws made here."""
        return Rng(self.seed, self._key + tuple(tags))

    def uniform(self, size=None) -> np.ndarray:
        """Draws from U[0, 1)."""
        return self._gen.random(size=size)

    def normal(self, size=None) -> np.ndarray:
        """Standard-normal draws."""
        return self._gen.standard_normal(size=size)

    def integers(self, low: int, high: int, size=None) -> np.ndarray:
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, key={self._key})"
