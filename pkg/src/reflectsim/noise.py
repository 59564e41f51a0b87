"""Counter-based Gaussian noise.

Step ``s`` of a run with seed ``seed`` always receives the same standard
normal vector, whichever worker computes it and in whatever order: the
normals for steps ``[B*k, B*(k+1))`` are drawn from a Philox stream keyed by
``(seed, k)`` through :class:`numpy.random.SeedSequence`.
"""

from __future__ import annotations

import numpy as np

BLOCK = 4096


def _generator(*key):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))


def block(seed: int, index: int, dim: int, size: int = BLOCK, stream: int = 0) -> np.ndarray:
    """Standard normals for the steps of block ``index``, shape ``(size, dim)``."""
    return _generator(seed, stream, index).standard_normal((size, dim))


class NoiseSource:
    """Random access to the per-step normal vectors of one seed."""

    def __init__(self, seed: int, dim: int, stream: int = 0, block_size: int = BLOCK):
        self.seed = int(seed)
        self.dim = dim
        self.stream = stream
        self.block_size = block_size
        self._index = -1
        self._block = None

    def __call__(self, step: int) -> np.ndarray:
        k, r = divmod(step, self.block_size)
        if k != self._index:
            self._block = block(self.seed, k, self.dim, self.block_size, self.stream)
            self._index = k
        return self._block[r]

    def take(self, start: int, count: int) -> np.ndarray:
        return np.array([self(s) for s in range(start, start + count)])


def brownian_increments(seed: int, dt: float, steps: int, dim: int) -> np.ndarray:
    """Brownian increments ``sqrt(dt) * xi`` for ``steps`` steps, shape ``(steps, dim)``."""
    src = NoiseSource(seed, dim)
    return np.sqrt(dt) * src.take(0, steps)


def refine(increments: np.ndarray, dt: float, seed: int, level: int) -> np.ndarray:
    """Brownian-bridge refinement of increments over steps of length ``dt``.

    Each increment ``S`` is split into two halves ``S/2 + sqrt(dt/4) z`` and
    ``S/2 - sqrt(dt/4) z`` with ``z`` standard normal, so the coarse
    increments are exactly the sums of consecutive fine ones.
    """
    steps, dim = increments.shape
    z = NoiseSource(seed, dim, stream=1 + level).take(0, steps)
    half = 0.5 * increments
    jitter = np.sqrt(dt / 4.0) * z
    fine = np.empty((2 * steps, dim))
    fine[0::2] = half + jitter
    fine[1::2] = half - jitter
    return fine
