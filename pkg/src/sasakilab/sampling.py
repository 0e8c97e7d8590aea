"""Seeded sampling.

All randomness goes through :func:`generator`, a counter-based Philox stream.
Independent streams for sub-tasks come from :func:`substream`, so adding a
task never shifts the samples another task sees.
"""

from __future__ import annotations

import zlib

import numpy as np


def generator(seed: int, *keys: str) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(substream(seed, *keys)))


def substream(seed: int, *keys: str) -> np.random.SeedSequence:
    words = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    words += [zlib.crc32(k.encode()) for k in keys]
    return np.random.SeedSequence(words)


def unit_vectors(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    v = rng.normal(size=(count, dim))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def fiber_vectors(rng: np.random.Generator, count: int, dim: int, fiber=(0.3, 1.2)) -> np.ndarray:
    """Coordinate vectors with Euclidean length in ``fiber`` (away from u = 0)."""
    lo, hi = fiber
    return unit_vectors(rng, count, dim) * rng.uniform(lo, hi, size=(count, 1))
