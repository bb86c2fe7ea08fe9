"""
Deterministic pairwise reductions.

Rows are split into fixed-size blocks that do not depend on the worker count;
block results are merged in block order and scalar partials through a fixed
pairwise tree, so any number of threads gives bit-identical sums.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from functools import cached_property

import numpy as np

from .kernels import KernelSet

logger = logging.getLogger(__name__)


def tree_sum(parts: list):
    """Pairwise sum with a fixed association order."""
    if not parts:
        return 0.0
    while len(parts) > 1:
        merged = [parts[i] + parts[i + 1] for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            merged.append(parts[-1])
        parts = merged
    return parts[0]


class PairEngine:
    """Runs per-block work over row blocks of an N x N pair interaction."""

    def __init__(self, threads: int = 1, block_size: int = 64):
        if threads < 1 or block_size < 1:
            raise ValueError("threads and block_size must be >= 1")
        self.threads = threads
        self.block_size = block_size
        self._pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None

    def blocks(self, n: int) -> list[slice]:
        return [slice(s, min(s + self.block_size, n)) for s in range(0, n, self.block_size)]

    def _map(self, fn, n: int) -> list:
        blocks = self.blocks(n)
        if self._pool is None:
            return [fn(b) for b in blocks]
        return list(self._pool.map(fn, blocks))

    def map_rows(self, fn, n: int) -> np.ndarray:
        """Concatenate fn(rows) along axis 0 in block order."""
        return np.concatenate(self._map(fn, n), axis=0)

    def reduce(self, fn, n: int):
        """Tree-sum the per-block partials returned by fn(rows)."""
        return tree_sum(self._map(fn, n))

    def close(self):
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class PairBlock:
    """
    Geometry of the pairs (i, j) for i in a row block and every j.

    Self pairs carry zero pair weight; the interaction weight is set to 0
    where the velocity difference vanishes (a(0) = 0).
    """

    def __init__(self, positions: np.ndarray, velocities: np.ndarray, weights: np.ndarray,
                 rows: slice, k: KernelSet):
        self.rows = rows
        self.k = k
        self.dx = k.domain.minimal_image(positions[rows, None, :] - positions[None, :, :])
        self.dv = velocities[rows, None, :] - velocities[None, :, :]
        self.r2 = np.sum(self.dv * self.dv, axis=-1)
        n = len(weights)
        inner = np.broadcast_to(weights[None, :], (self.dv.shape[0], n)).copy()
        idx = np.arange(rows.start, rows.stop)
        inner[idx - rows.start, idx] = 0.0
        self.inner = inner
        self.outer = weights[rows]

    @cached_property
    def kappa(self) -> np.ndarray:
        return self.k.spatial_weight(self.dx)

    @cached_property
    def weight(self) -> np.ndarray:
        moving = self.r2 > 0
        return np.where(moving, self.k.weight_from_r2(np.where(moving, self.r2, 1.0)), 0.0)

    @cached_property
    def sqrt_weight(self) -> np.ndarray:
        return np.sqrt(self.weight)

    @cached_property
    def reduced_weight(self) -> np.ndarray:
        return self.k.reduced_weight_from_r2(self.r2)

    @cached_property
    def pair_mass(self) -> np.ndarray:
        """w_i w_j with the diagonal removed."""
        return self.outer[:, None] * self.inner

    def project(self, y: np.ndarray) -> np.ndarray:
        return self.k.project_perp(self.dv, y, self.r2)

    def difference(self, site_values: np.ndarray) -> np.ndarray:
        """site_values[i] - site_values[j] over the block."""
        return site_values[self.rows, None, :] - site_values[None, :, :]

    def fuzzy(self, grad_v: np.ndarray) -> np.ndarray:
        """sqrt(A) Pi (g_i - g_j) for per-site velocity gradients g."""
        return self.sqrt_weight[..., None] * self.project(self.difference(grad_v))
