"""Embedding-space anomaly detectors and ranking evaluation.

All detectors return a score per point where larger means more anomalous,
wrapped in :class:`AnomalyScores` together with the parameters used.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .neighbors import knn, _values

LOF_EPS = 1e-12


@dataclass
class AnomalyScores:
    """Per-point anomaly scores from a named detector."""

    detector: str
    scores: np.ndarray
    params: dict = field(default_factory=dict)


def knn_score(z, k: int = 20) -> AnomalyScores:
    """Sum of distances to the k nearest neighbors."""
    graph = knn(_values(z), k)
    return AnomalyScores("knn", graph.dist.sum(axis=1), {"k": k})


def lof_score(z, k: int = 20) -> AnomalyScores:
    """Local outlier factor with exactly-k neighborhoods.

    reach_k(i, j) = max(kdist(j), d(i, j)); lrd_i is the inverse mean
    reachability over i's neighbors (guarded by a 1e-12 epsilon for
    duplicate-heavy inputs); LOF_i is the mean lrd ratio.
    """
    x = _values(z)
    graph = knn(x, k)
    kdist = graph.dist[:, -1]
    reach = np.maximum(kdist[graph.idx], graph.dist)
    lrd = 1.0 / (reach.mean(axis=1) + LOF_EPS)
    scores = lrd[graph.idx].mean(axis=1) / lrd
    return AnomalyScores("lof", scores, {"k": k})


def _harmonic_numbers(m: int) -> np.ndarray:
    h = np.zeros(m + 1)
    if m >= 1:
        h[1:] = np.cumsum(1.0 / np.arange(1, m + 1))
    return h


def average_path_length(m: int, harmonics: np.ndarray | None = None) -> float:
    """Expected unsuccessful-search path length c(m) of a BST with m points."""
    if m <= 1:
        return 0.0
    if harmonics is None:
        harmonics = _harmonic_numbers(m - 1)
    return 2.0 * harmonics[m - 1] - 2.0 * (m - 1) / m


def _build_tree(x, rows, depth, cap, rng):
    if depth >= cap or rows.size <= 1:
        return rows.size
    sub = x[rows]
    lo = sub.min(axis=0)
    hi = sub.max(axis=0)
    splittable = np.flatnonzero(hi > lo)
    if splittable.size == 0:
        return rows.size
    feat = int(rng.choice(splittable))
    value = rng.uniform(lo[feat], hi[feat])
    left = sub[:, feat] < value
    if not left.any() or left.all():
        return rows.size
    return (
        feat,
        value,
        _build_tree(x, rows[left], depth + 1, cap, rng),
        _build_tree(x, rows[~left], depth + 1, cap, rng),
    )


def _route(node, x, rows, depth, paths, harmonics):
    if isinstance(node, int):
        paths[rows] += depth + average_path_length(node, harmonics)
        return
    feat, value, left, right = node
    mask = x[rows, feat] < value
    _route(left, x, rows[mask], depth + 1, paths, harmonics)
    _route(right, x, rows[~mask], depth + 1, paths, harmonics)


def iforest_score(z, trees: int = 100, subsample: int = 256, seed: int = 0) -> AnomalyScores:
    """Isolation forest: score_i = 2^(-E[path length] / c(subsample)).

    Trees grow on without-replacement subsamples (capped at n) to the height
    cap ceil(log2(subsample)), choosing a uniform split feature among those
    with positive range and a uniform split value inside the node range.
    Tree t draws from a generator seeded with seed + t.
    """
    x = _values(z)
    n = x.shape[0]
    if trees < 1 or subsample < 2:
        raise ConfigError("need trees >= 1 and subsample >= 2")
    m = min(subsample, n)
    cap = int(np.ceil(np.log2(m)))
    harmonics = _harmonic_numbers(m)
    paths = np.zeros(n)
    all_rows = np.arange(n)
    for t in range(trees):
        rng = np.random.default_rng(seed + t)
        rows = rng.choice(n, size=m, replace=False)
        tree = _build_tree(x, rows, 0, cap, rng)
        _route(tree, x, all_rows, 0, paths, harmonics)
    expected = paths / trees
    scores = 2.0 ** (-expected / average_path_length(m, harmonics))
    return AnomalyScores(
        "iforest", scores, {"trees": trees, "subsample": m, "seed": seed}
    )


def centroid_score(z) -> AnomalyScores:
    """Euclidean distance from the embedding centroid."""
    x = _values(z)
    return AnomalyScores("centroid", np.linalg.norm(x - x.mean(axis=0), axis=1), {})


def auprc(scores, flags) -> float:
    """Area under the precision-recall curve via average precision.

    Points are ranked by descending score; tied blocks are processed
    jointly, with precision evaluated after the whole block. A constant
    score vector therefore yields the positive rate.
    """
    scores = np.asarray(scores, dtype=np.float64)
    flags = np.asarray(flags, dtype=bool)
    if scores.shape != flags.shape or scores.ndim != 1:
        raise ConfigError("scores and flags must be equal-length vectors")
    pos = int(flags.sum())
    if pos == 0 or pos == flags.size:
        raise ConfigError("AUPRC needs at least one positive and one negative")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = flags[order]
    block_end = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(y)[block_end]
    precision = tp / (block_end + 1.0)
    delta_tp = np.diff(np.r_[0, tp])
    return float((precision * delta_tp).sum() / pos)
