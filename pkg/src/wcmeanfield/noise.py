"""Reproducible per-neuron Gaussian noise streams.

Each neuron (or mean-field slot) owns a Philox stream keyed by
``(seed, group, population, slot, purpose)``. Because the key depends only on
the neuron label, a trajectory does not depend on array layout, on how many
other neurons are simulated, or on how the draws are chunked. Two simulations
that use the same label therefore consume bit-identical increments, which is
what the coupled network / mean-field comparison relies on.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

INCREMENTS = 0
INITIAL = 1

# rows per refill are capped so that one block stays around 16 MB
MAX_BLOCK = 1024
_BLOCK_VALUES = 2_000_000


def _zigzag(i: int) -> int:
    # SeedSequence spawn keys must be non-negative
    return 2 * i if i >= 0 else -2 * i - 1


@dataclass(frozen=True)
class NoiseStream:
    seed: int

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "seed", int(self.seed))

    def generator(self, key, purpose: int = INCREMENTS) -> np.random.Generator:
        group, population, slot = key
        ss = np.random.SeedSequence(
            self.seed,
            spawn_key=(_zigzag(group), population, _zigzag(slot), purpose),
        )
        return np.random.Generator(np.random.Philox(ss))

    def normals(self, key, count: int, purpose: int = INCREMENTS) -> np.ndarray:
        """First ``count`` standard normals of one stream."""
        return self.generator(key, purpose).standard_normal(count)

    def initial_values(self, keys, mean, variance) -> np.ndarray:
        """Gaussian initial condition per key; exactly ``mean`` where variance is 0."""
        mean = np.asarray(mean, dtype=float)
        variance = np.asarray(variance, dtype=float)
        if not np.any(variance > 0):
            return mean.copy()
        z = np.array([self.generator(k, INITIAL).standard_normal() for k in keys])
        return mean + np.sqrt(variance) * z

    def increments(self, keys, digest_keys=(), substeps: int = 1) -> "IncrementSource":
        """Per-step standard normals for every key.

        With ``substeps`` r > 1 each returned value is the normalised sum of
        r consecutive draws, i.e. the increment over dt of the same Brownian
        path that a run with step dt/r and ``substeps=1`` would see.
        """
        return IncrementSource(self, list(keys), digest_keys, substeps)


class IncrementSource:
    """Sequential block reader over many streams at once.

    ``next()`` returns the standard normals of the next time step for every
    key, in key order. Streams are read in blocks; the values do not depend
    on the block size.
    """

    def __init__(self, stream: NoiseStream, keys, digest_keys=(), substeps: int = 1):
        if substeps < 1:
            raise ValueError("substeps must be >= 1")
        self.keys = keys
        self.substeps = substeps
        self._gens = [stream.generator(k) for k in keys]
        self._rows = max(8, min(MAX_BLOCK, _BLOCK_VALUES // max(1, len(keys))))
        self._block = np.empty((0, len(keys)))
        self._pos = 0
        self.steps = 0
        pos = {k: j for j, k in enumerate(keys)}
        self._digests = {k: hashlib.sha256() for k in digest_keys}
        self._digest_cols = {k: pos[k] for k in digest_keys}

    def _refill(self):
        block = np.empty((len(self._gens), self._rows))
        for j, g in enumerate(self._gens):
            g.standard_normal(out=block[j])
        self._block = np.ascontiguousarray(block.T)
        self._pos = 0

    def _draw(self) -> np.ndarray:
        if self._pos >= len(self._block):
            self._refill()
        row = self._block[self._pos]
        self._pos += 1
        for k, h in self._digests.items():
            h.update(row[self._digest_cols[k]].tobytes())
        return row

    def next(self) -> np.ndarray:
        self.steps += 1
        if self.substeps == 1:
            return self._draw()
        total = self._draw().copy()
        for _ in range(self.substeps - 1):
            total += self._draw()
        return total / math.sqrt(self.substeps)

    def digests(self) -> dict:
        return {k: h.hexdigest() for k, h in self._digests.items()}
