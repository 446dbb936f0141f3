"""Exact pairwise Euclidean distances and brute-force kNN graphs.

Everything here is deterministic: distance ties are always broken by
ascending point index, so a fixed input yields a fixed graph.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .preprocess import DataMatrix


def _values(points) -> np.ndarray:
    if isinstance(points, DataMatrix):
        return points.values
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2:
        raise ConfigError("points must be a 2-D array")
    return x


def pairwise_sq_distances(points) -> np.ndarray:
    """Squared Euclidean distances, accumulated per dimension (no cancellation)."""
    x = _values(points)
    n = x.shape[0]
    out = np.zeros((n, n))
    for j in range(x.shape[1]):
        diff = x[:, j, None] - x[None, :, j]
        out += diff * diff
    return out


def pairwise_distances(points) -> np.ndarray:
    """Full n x n Euclidean distance matrix (symmetric, zero diagonal)."""
    x = _values(points)
    if x.shape[0] < 2:
        raise ConfigError("need at least 2 points")
    return np.sqrt(pairwise_sq_distances(x))


@dataclass
class NeighborGraph:
    """k nearest neighbors per row, sorted by (distance, index) ascending.

    ``idx[i]`` never contains i itself; ``dist[i]`` is non-negative and
    non-decreasing along the row.
    """

    k: int
    idx: np.ndarray
    dist: np.ndarray

    def __post_init__(self):
        if self.idx.shape != self.dist.shape or self.idx.shape[1] != self.k:
            raise ConfigError("idx and dist must both be n x k")

    @property
    def n(self) -> int:
        return self.idx.shape[0]


def knn(points, k: int) -> NeighborGraph:
    """Brute-force k-nearest-neighbor graph under Euclidean distance."""
    x = _values(points)
    n = x.shape[0]
    if not 1 <= k <= n - 1:
        raise ConfigError(f"k must be in [1, n-1] = [1, {n - 1}], got {k}")
    d = pairwise_distances(x)
    np.fill_diagonal(d, np.inf)
    cols = np.broadcast_to(np.arange(n), (n, n))
    order = np.lexsort((cols, d), axis=1)
    idx = order[:, :k]
    dist = np.take_along_axis(d, idx, axis=1)
    return NeighborGraph(k=k, idx=idx, dist=dist)
