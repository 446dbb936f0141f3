"""kNN density estimates, the log-density discrepancy loss, and its gradient.

The density proxy of a point is k divided by the sum of distances to its k
nearest neighbors (plus a small epsilon), normalized to unit mean across the
sample. The loss compares log normalized densities between the input space
and the embedding; during optimization the embedding-side estimate reuses the
*fixed* input-space neighbor index sets, evaluated with embedding distances,
which keeps the term differentiable in the coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import ConfigError
from .neighbors import NeighborGraph

DENSITY_EPS = 1e-8


@dataclass
class DensityEstimate:
    """Raw densities ``rho``, unit-mean ``rho_tilde``, and their logs."""

    rho: np.ndarray
    rho_tilde: np.ndarray
    log_rho_tilde: np.ndarray

    @classmethod
    def from_raw(cls, rho: np.ndarray) -> "DensityEstimate":
        rho = np.asarray(rho, dtype=np.float64)
        if rho.ndim != 1 or rho.size == 0:
            raise ConfigError("rho must be a non-empty vector")
        if not np.all(np.isfinite(rho)) or np.any(rho <= 0):
            raise ConfigError("densities must be finite and positive")
        tilde = rho / rho.mean()
        return cls(rho=rho, rho_tilde=tilde, log_rho_tilde=np.log(tilde))

    @property
    def n(self) -> int:
        return self.rho.shape[0]


def knn_density(graph: NeighborGraph) -> DensityEstimate:
    """Density proxy rho_i = k / (sum of kNN distances + eps), unit-mean scaled."""
    sums = graph.dist.sum(axis=1)
    return DensityEstimate.from_raw(graph.k / (sums + DENSITY_EPS))


def _neighbor_idx(graph_or_idx) -> np.ndarray:
    if isinstance(graph_or_idx, NeighborGraph):
        return graph_or_idx.idx
    idx = np.asarray(graph_or_idx)
    if idx.ndim != 2:
        raise ConfigError("neighbor index sets must be an n x k integer array")
    return idx


def density_loss_and_gradient(
    high: DensityEstimate, z, graph_or_idx, *, with_gradient: bool = True
):
    """Mean squared log-density discrepancy and (optionally) its z-gradient.

    The embedding-side density uses the supplied neighbor index sets (from
    the input-space graph) with distances measured in the embedding. Edge
    vectors are handled one dimension at a time to keep the working set small
    inside the optimizer loop.
    """
    z = np.asarray(z, dtype=np.float64)
    idx = _neighbor_idx(graph_or_idx)
    n, k = idx.shape
    if high.n != n or z.shape[0] != n:
        raise ConfigError("density estimate, coordinates, and graph disagree on n")
    deltas = [z[:, dim, None] - z[:, dim][idx] for dim in range(z.shape[1])]
    d = deltas[0] * deltas[0]
    for dz in deltas[1:]:
        d += dz * dz
    np.sqrt(d, out=d)
    sums = d.sum(axis=1) + DENSITY_EPS
    rho = k / sums
    mu = rho.mean()
    log_tilde_low = np.log(rho / mu)
    err = high.log_rho_tilde - log_tilde_low
    loss = float(np.mean(err**2))
    if not with_gradient:
        return loss, None

    # dL/dS_m = (2 / (n S_m)) * (e_m - rho_m * sum(e) / (n mu))
    ds = (2.0 / (n * sums)) * (err - rho * err.sum() / (n * mu))
    with np.errstate(invalid="ignore", divide="ignore"):
        coef = np.where(d > 0, 1.0 / d, 0.0)
    coef *= ds[:, None]
    grad = np.empty_like(z)
    flat = idx.ravel()
    for dim, dz in enumerate(deltas):
        dz *= coef  # weighted unit edge components
        grad[:, dim] = dz.sum(axis=1)
        grad[:, dim] -= np.bincount(flat, weights=dz.ravel(), minlength=n)
    return loss, grad


def density_loss(high: DensityEstimate, z, graph_or_idx) -> float:
    """Mean squared difference of log normalized densities (input vs embedding)."""
    loss, _ = density_loss_and_gradient(high, z, graph_or_idx, with_gradient=False)
    return loss


def density_loss_gradient(high: DensityEstimate, z, graph_or_idx) -> np.ndarray:
    """Gradient of ``density_loss`` with respect to the embedding coordinates."""
    _, grad = density_loss_and_gradient(high, z, graph_or_idx)
    return grad


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    """Pearson correlation of two equal-length vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ConfigError("correlation inputs must be equal-length vectors")
    ac = a - a.mean()
    bc = b - b.mean()
    denom = np.sqrt((ac**2).sum() * (bc**2).sum())
    if denom == 0:
        raise ConfigError("correlation undefined: an input has zero variance")
    return float((ac * bc).sum() / denom)


def density_correlation(
    high: DensityEstimate, low: DensityEstimate, method: str = "pearson"
) -> float:
    """Correlation of log normalized densities between the two spaces.

    Pearson by default; ``method="spearman"`` ranks both vectors first
    (average ranks on ties).
    """
    if high.n != low.n:
        raise ConfigError("density estimates cover different numbers of points")
    a, b = high.log_rho_tilde, low.log_rho_tilde
    if method == "spearman":
        a, b = rankdata(a), rankdata(b)
    elif method != "pearson":
        raise ConfigError(f"unknown correlation method {method!r}")
    return pearson(a, b)
