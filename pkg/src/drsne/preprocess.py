"""Input container, per-column standardization, and PCA projection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass
class DataMatrix:
    """An n x D feature matrix with optional per-row labels and anomaly flags.

    All entries must be finite. ``labels`` are integer class ids and
    ``anomaly`` is a boolean vector; both are optional and carried through
    the preprocessing steps unchanged.
    """

    values: np.ndarray
    labels: np.ndarray | None = None
    anomaly: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ConfigError("values must be a 2-D matrix")
        n, d = self.values.shape
        if n < 2 or d < 1:
            raise ConfigError(f"need at least 2 rows and 1 column, got {n}x{d}")
        bad = ~np.isfinite(self.values)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise ConfigError(f"non-finite value at row {i}, column {j}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (n,):
                raise ConfigError(f"labels must be a vector of length {n}")
        if self.anomaly is not None:
            self.anomaly = np.asarray(self.anomaly, dtype=bool)
            if self.anomaly.shape != (n,):
                raise ConfigError(f"anomaly flags must be a vector of length {n}")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


def as_matrix(data) -> DataMatrix:
    """Coerce an array-like or DataMatrix into a DataMatrix."""
    if isinstance(data, DataMatrix):
        return data
    return DataMatrix(np.asarray(data, dtype=np.float64))


def standardize(data) -> DataMatrix:
    """Center each column and scale it to unit population standard deviation.

    The population convention (divide by n) is used throughout the package.
    Constant columns are centered to zero and left there instead of being
    divided by their zero spread.
    """
    data = as_matrix(data)
    x = data.values
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    centered = x - mean
    out = np.divide(centered, std, out=np.zeros_like(centered), where=std > 0)
    return DataMatrix(out, labels=data.labels, anomaly=data.anomaly)


@dataclass
class PcaModel:
    """Principal-direction basis fitted to a centered data matrix.

    ``components`` has orthonormal columns (one per retained direction).
    ``explained_variance`` holds the population variance of the data along
    each column, in non-increasing order.
    """

    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray

    @property
    def n_components(self) -> int:
        return self.components.shape[1]


def pca_fit(data, m: int) -> PcaModel:
    """Fit an m-component PCA basis.

    Uses a dense symmetric eigendecomposition of the D x D covariance when
    D <= n, and a thin SVD of the centered matrix otherwise. Each component's
    sign is fixed so that its largest-magnitude entry is positive.
    """
    data = as_matrix(data)
    x = data.values
    n, d = x.shape
    if not 1 <= m <= min(n, d):
        raise ConfigError(f"m must be in [1, min(n, D)] = [1, {min(n, d)}], got {m}")
    mean = x.mean(axis=0)
    xc = x - mean
    if d <= n:
        cov = (xc.T @ xc) / n
        evals, evecs = np.linalg.eigh(cov)
        order = np.argsort(evals)[::-1]
        variance = evals[order][:m]
        components = evecs[:, order[:m]]
    else:
        _, svals, vt = np.linalg.svd(xc, full_matrices=False)
        variance = (svals[:m] ** 2) / n
        components = vt[:m].T
    variance = np.maximum(variance, 0.0)
    flip = components[np.argmax(np.abs(components), axis=0), np.arange(m)] < 0
    components = components * np.where(flip, -1.0, 1.0)
    return PcaModel(mean=mean, components=components, explained_variance=variance)


def pca_transform(model: PcaModel, data) -> DataMatrix:
    """Project data onto a fitted PCA basis."""
    data = as_matrix(data)
    if data.dim != model.mean.shape[0]:
        raise ConfigError(
            f"data has {data.dim} columns but the model was fitted on "
            f"{model.mean.shape[0]}"
        )
    out = (data.values - model.mean) @ model.components
    return DataMatrix(out, labels=data.labels, anomaly=data.anomaly)
