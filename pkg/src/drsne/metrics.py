"""Embedding quality metrics: rank preservation, cluster shape, stress, DC."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .density import density_correlation, knn_density
from .errors import ConfigError
from .neighbors import knn, pairwise_distances, _values


def _neighborhoods_and_ranks(x: np.ndarray, k: int):
    """Per-row neighbor order by (distance, index); returns top-k and full ranks."""
    d = pairwise_distances(x)
    n = d.shape[0]
    np.fill_diagonal(d, np.inf)
    cols = np.broadcast_to(np.arange(n), (n, n))
    order = np.lexsort((cols, d), axis=1)
    ranks = np.empty((n, n), dtype=np.int64)
    np.put_along_axis(ranks, order, np.arange(1, n + 1)[None, :], axis=1)
    return order[:, :k], ranks


def trustworthiness(high, z, k: int) -> float:
    """Penalty for embedding neighbors that are not input-space neighbors.

    1 is perfect; each point j in the embedding k-neighborhood of i that is
    not among i's k nearest input-space neighbors costs its input-space rank
    excess r(i, j) - k. Ranks start at 1 and break ties by index. Requires
    k < n/2 so the normalizer stays positive.
    """
    xh = _values(high)
    xz = _values(z)
    n = xh.shape[0]
    if xz.shape[0] != n:
        raise ConfigError("high and embedding row counts differ")
    if not 1 <= k < n / 2:
        raise ConfigError(f"k must satisfy 1 <= k < n/2 = {n / 2}, got {k}")
    high_nbrs, high_ranks = _neighborhoods_and_ranks(xh, k)
    emb_nbrs, _ = _neighborhoods_and_ranks(xz, k)
    member = np.zeros((n, n), dtype=bool)
    np.put_along_axis(member, high_nbrs, True, axis=1)
    ranks_of_emb = np.take_along_axis(high_ranks, emb_nbrs, axis=1)
    novel = ~np.take_along_axis(member, emb_nbrs, axis=1)
    penalty = float(((ranks_of_emb - k) * novel).sum())
    return 1.0 - 2.0 * penalty / (n * k * (2.0 * n - 3.0 * k - 1.0))


def continuity(high, z, k: int) -> float:
    """Penalty for input-space neighbors missing from the embedding
    neighborhood; the mirror image of trustworthiness with the two spaces
    swapped."""
    return trustworthiness(z, high, k)


def silhouette(z, labels) -> float:
    """Mean silhouette width (b - a) / max(a, b) under Euclidean distance.

    Points in singleton clusters contribute 0. Requires at least two
    distinct labels.
    """
    x = _values(z)
    labels = np.asarray(labels)
    if labels.shape != (x.shape[0],):
        raise ConfigError("labels must be a vector matching the row count")
    uniq = np.unique(labels)
    if uniq.size < 2:
        raise ConfigError("silhouette needs at least two distinct labels")
    d = pairwise_distances(x)
    n = x.shape[0]
    masks = [labels == c for c in uniq]
    sizes = np.array([m.sum() for m in masks])
    # mean distance from every point to every cluster
    cluster_mean = np.stack([d[:, m].sum(axis=1) / m.sum() for m in masks], axis=1)
    scores = np.zeros(n)
    for ci, mask in enumerate(masks):
        size = sizes[ci]
        if size == 1:
            continue  # singleton: contribution stays 0
        a = cluster_mean[mask, ci] * size / (size - 1)  # exclude self distance
        others = np.delete(cluster_mean[mask], ci, axis=1)
        b = others.min(axis=1)
        denom = np.maximum(a, b)
        scores[mask] = np.where(denom > 0, (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(scores.mean())


def stress(high, z) -> float:
    """Kruskal-style stress on raw distances: sqrt(sum (dX-dZ)^2 / sum dX^2).

    No scale is fitted, so values above 1 are possible for expanded
    embeddings.
    """
    xh = _values(high)
    xz = _values(z)
    if xh.shape[0] != xz.shape[0]:
        raise ConfigError("high and embedding row counts differ")
    iu = np.triu_indices(xh.shape[0], k=1)
    dx = pairwise_distances(xh)[iu]
    dz = pairwise_distances(xz)[iu]
    denom = float((dx**2).sum())
    if denom == 0:
        raise ConfigError("stress undefined: all input points coincide")
    return float(np.sqrt(((dx - dz) ** 2).sum() / denom))


@dataclass
class MetricReport:
    """Bundle of embedding quality metrics at a single neighborhood size."""

    trustworthiness: float
    continuity: float
    stress: float
    density_correlation: float
    k_eval: int
    silhouette: float | None = None

    def to_dict(self) -> dict:
        out = {
            "trustworthiness": self.trustworthiness,
            "continuity": self.continuity,
            "stress": self.stress,
            "density_correlation": self.density_correlation,
            "k_eval": self.k_eval,
        }
        if self.silhouette is not None:
            out["silhouette"] = self.silhouette
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def evaluate_embedding(
    high, z, k_eval: int, labels=None, dc_method: str = "pearson"
) -> MetricReport:
    """Compute the standard metric bundle for an embedding of ``high``.

    The density correlation recomputes kNN densities in both spaces at
    ``k_eval``, so evaluating with the training-time density neighborhood
    size reproduces the training-time comparison.
    """
    xh = _values(high)
    xz = _values(z)
    n = xh.shape[0]
    if not 1 <= k_eval < n / 2:
        raise ConfigError(f"k_eval must satisfy 1 <= k_eval < n/2 = {n / 2}, got {k_eval}")
    tw = trustworthiness(xh, xz, k_eval)
    co = continuity(xh, xz, k_eval)
    st = stress(xh, xz)
    dc = density_correlation(
        knn_density(knn(xh, k_eval)), knn_density(knn(xz, k_eval)), method=dc_method
    )
    sil = None
    if labels is not None:
        sil = silhouette(xz, labels)
    report = MetricReport(
        trustworthiness=tw,
        continuity=co,
        stress=st,
        density_correlation=dc,
        k_eval=k_eval,
        silhouette=sil,
    )
    for name, value in report.to_dict().items():
        if isinstance(value, float) and not math.isfinite(value):
            raise ConfigError(f"metric {name} is non-finite")
    return report
