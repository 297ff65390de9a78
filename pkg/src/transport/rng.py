"""Counter-based random streams keyed by ``(seed, replica_id)``.

Each replica owns a Philox stream, so a replica's Gaussians do not depend on
which other replicas share its block or worker.
"""

from __future__ import annotations

import numpy as np

DYNAMICS = 0
INITIAL = 1


def stream(seed: int, replica_id: int, purpose: int = DYNAMICS) -> np.random.Generator:
    """Generator for one replica; ``purpose`` selects a disjoint counter range."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, replica_id], dtype=np.uint64)
    counter = np.array([0, 0, 0, purpose], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


class BlockNoise:
    """Per-step standard Gaussians of shape ``(K, width)`` for a block of replicas.

    Draws are made replica by replica in chunks of steps; since each
    replica's stream is consumed sequentially the values are independent of
    the chunk length and of the block composition.
    """

    def __init__(self, seed: int, replica_ids, width: int, budget: int = 2_000_000):
        self.ids = np.asarray(replica_ids, dtype=np.int64)
        self.width = int(width)
        self.gens = [stream(seed, int(r)) for r in self.ids]
        K = max(len(self.gens), 1)
        self.chunk = int(max(1, min(4096, budget // max(K * max(self.width, 1), 1))))
        self._buf = None
        self._pos = self.chunk

    def __call__(self) -> np.ndarray:
        if self.width == 0:
            return np.zeros((len(self.gens), 0))
        if self._pos >= self.chunk:
            self._buf = np.stack([g.standard_normal((self.chunk, self.width)) for g in self.gens], axis=1)
            self._pos = 0
        out = self._buf[self._pos]
        self._pos += 1
        return out


def initial_normals(seed: int, replica_ids, shape) -> np.ndarray:
    """Gaussian draws for initial conditions, one independent stream per replica."""
    return np.stack([stream(seed, int(r), INITIAL).standard_normal(shape) for r in replica_ids])
