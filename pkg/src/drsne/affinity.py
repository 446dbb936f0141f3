"""Perplexity-calibrated Gaussian affinities restricted to kNN graphs.

Each point i gets a conditional distribution over its k nearest neighbors,

    p(j|i) = exp(-beta_i * d_ij^2) / sum_{l in N_k(i)} exp(-beta_i * d_il^2),

with beta_i chosen by bisection so that 2^H(p(.|i)) equals the requested
perplexity (H in bits). The joint affinity of an unordered pair is then
p_ij = (p(j|i) + p(i|j)) / (2n), where a missing direction contributes zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigError
from .neighbors import NeighborGraph

BETA_MIN = 1e-12
BETA_MAX = 1e12
ENTROPY_TOL_BITS = 1e-4
MAX_BISECT_ITERS = 200


@dataclass
class PerplexityCalibration:
    """Per-point Gaussian precisions and the perplexities they achieve.

    ``hit_cap[i]`` is set when the bisection exhausted its iteration budget
    without meeting the entropy tolerance (degenerate rows such as perfectly
    equidistant neighborhoods). Flagged rows are reported, not fatal.
    """

    perplexity: float
    beta: np.ndarray
    achieved_perplexity: np.ndarray
    hit_cap: np.ndarray


def _entropy_bits(beta, d2, shift):
    """Entropy (bits) of the Gaussian conditionals at the given precisions."""
    logits = -beta[:, None] * (d2 - shift)
    w = np.exp(logits)
    z = w.sum(axis=1)
    mean_shifted = (w * (d2 - shift)).sum(axis=1) / z
    return (np.log(z) + beta * mean_shifted) / np.log(2.0)


def calibrate_betas(graph: NeighborGraph, perplexity: float) -> PerplexityCalibration:
    """Find per-row precisions matching the target perplexity by bisection.

    The bracket starts at [1e-12, 1] and the upper end doubles (capped at
    1e12) until it overshoots the target entropy, after which ordinary
    bisection takes over. A row that cannot meet the 1e-4-bit tolerance
    within 200 total iterations is flagged via ``hit_cap``.
    """
    if not np.isfinite(perplexity) or perplexity <= 1.0:
        raise ConfigError(f"perplexity must be a finite real > 1, got {perplexity}")
    if perplexity >= graph.k:
        raise ConfigError(
            f"perplexity ({perplexity}) must be < k ({graph.k}); the "
            "neighborhood cannot carry the requested entropy"
        )
    d2 = graph.dist.astype(np.float64) ** 2
    zero_rows = np.flatnonzero(~np.any(graph.dist > 0, axis=1))
    if zero_rows.size:
        raise ConfigError(
            f"all {graph.k} neighbor distances are zero for point "
            f"{zero_rows[0]}; remove duplicate points"
        )
    n = graph.n
    shift = d2.min(axis=1, keepdims=True)
    target = np.log2(perplexity)

    lo = np.full(n, BETA_MIN)
    hi = np.ones(n)
    expanding = np.ones(n, dtype=bool)
    beta = np.ones(n)
    done = np.zeros(n, dtype=bool)

    for _ in range(MAX_BISECT_ITERS):
        active = np.flatnonzero(~done)
        if active.size == 0:
            break
        cand = np.where(expanding[active], hi[active], 0.5 * (lo[active] + hi[active]))
        h = _entropy_bits(cand, d2[active], shift[active])
        beta[active] = cand
        hit = np.abs(h - target) <= ENTROPY_TOL_BITS
        done[active[hit]] = True

        rows = active[~hit]
        h = h[~hit]
        cand = cand[~hit]
        too_flat = h > target  # entropy still above target: need larger beta
        exp_rows = expanding[rows]
        grow = rows[exp_rows & too_flat]
        lo[grow] = hi[grow]
        hi[grow] = np.minimum(hi[grow] * 2.0, BETA_MAX)
        bracketed = rows[exp_rows & ~too_flat]
        expanding[bracketed] = False
        bis = rows[~exp_rows]
        bis_lo = bis[too_flat[~exp_rows]]
        bis_hi = bis[~too_flat[~exp_rows]]
        lo[bis_lo] = beta[bis_lo]
        hi[bis_hi] = beta[bis_hi]

    achieved = 2.0 ** _entropy_bits(beta, d2, shift)
    return PerplexityCalibration(
        perplexity=float(perplexity),
        beta=beta,
        achieved_perplexity=achieved,
        hit_cap=~done,
    )


def _conditionals(graph: NeighborGraph, beta: np.ndarray) -> np.ndarray:
    d2 = graph.dist.astype(np.float64) ** 2
    shift = d2.min(axis=1, keepdims=True)
    w = np.exp(-beta[:, None] * (d2 - shift))
    return w / w.sum(axis=1, keepdims=True)


@dataclass
class AffinityMatrix:
    """Sparse symmetric joint affinities over the kNN support.

    ``pair_i < pair_j`` index the unordered stored pairs with values
    ``pair_p``; summing ``pair_p`` over both orderings gives total mass 1.
    ``knn_i -> knn_j`` enumerate the directed kNN edges the sparse objective
    iterates over, with ``knn_p`` the joint affinity of each such edge.
    """

    n: int
    pair_i: np.ndarray
    pair_j: np.ndarray
    pair_p: np.ndarray
    knn_i: np.ndarray
    knn_j: np.ndarray
    knn_p: np.ndarray

    @cached_property
    def _lookup(self) -> dict:
        keys = self.pair_i * self.n + self.pair_j
        return dict(zip(keys.tolist(), self.pair_p.tolist()))

    def get(self, i: int, j: int) -> float:
        """Affinity of the unordered pair {i, j}; zero off the support."""
        if i == j:
            return 0.0
        a, b = (i, j) if i < j else (j, i)
        return self._lookup.get(a * self.n + b, 0.0)

    def total_ordered_mass(self) -> float:
        """Sum of p_ij over all stored ordered pairs, counting (i,j) and (j,i)."""
        return 2.0 * float(self.pair_p.sum())

    def directed_mass(self) -> float:
        """Sum of p_ij over the directed kNN edge list."""
        return float(self.knn_p.sum())


def joint_affinities(
    graph: NeighborGraph, calibration: PerplexityCalibration
) -> AffinityMatrix:
    """Symmetrize calibrated conditionals into joint pairwise affinities."""
    if calibration.beta.shape[0] != graph.n:
        raise ConfigError(
            f"calibration covers {calibration.beta.shape[0]} points but the "
            f"graph has {graph.n}"
        )
    n = graph.n
    cond = _conditionals(graph, calibration.beta)
    src = np.repeat(np.arange(n), graph.k)
    dst = graph.idx.ravel()
    lo = np.minimum(src, dst)
    hi = np.maximum(src, dst)
    keys, inverse = np.unique(lo * n + hi, return_inverse=True)
    pair_p = np.bincount(inverse, weights=cond.ravel()) / (2.0 * n)
    return AffinityMatrix(
        n=n,
        pair_i=keys // n,
        pair_j=keys % n,
        pair_p=pair_p,
        knn_i=src,
        knn_j=dst,
        knn_p=pair_p[inverse],
    )


def exaggerate(p: AffinityMatrix, factor: float) -> AffinityMatrix:
    """Scale every affinity by a constant early-exaggeration factor."""
    if not np.isfinite(factor) or factor < 1.0:
        raise ConfigError(f"exaggeration factor must be a finite real >= 1, got {factor}")
    return AffinityMatrix(
        n=p.n,
        pair_i=p.pair_i,
        pair_j=p.pair_j,
        pair_p=p.pair_p * factor,
        knn_i=p.knn_i,
        knn_j=p.knn_j,
        knn_p=p.knn_p * factor,
    )
