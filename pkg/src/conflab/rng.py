"""Deterministic RNG derivation.

Every stochastic operation takes an explicit integer seed and derives its
stream locally, so results are reproducible and independent of evaluation
order (parallel loops derive one child stream per work item).
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK32 = 0xFFFFFFFF


def _key(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8")) & _MASK32
    return int(part) & _MASK32


def derive_rng(seed: int, *parts) -> np.random.Generator:
    """Child generator for (seed, *parts); same inputs give the same stream."""
    spawn = tuple(_key(p) for p in parts)
    return np.random.default_rng(np.random.SeedSequence(int(seed) & _MASK32, spawn_key=spawn))


def derive_seed(seed: int, *parts) -> int:
    """Stable 32-bit child seed, for APIs that want an integer."""
    return int(derive_rng(seed, *parts).integers(0, 2**32 - 1))
