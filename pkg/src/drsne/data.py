"""Synthetic spiral generators and CSV / provenance file handling.

The generators draw a 1-D parameter t from a sinusoidally modulated density
by rejection sampling, place points on the spiral (t cos t, t sin t), add
isotropic Gaussian noise, and (for the high-dimensional variant) push the
plane through a random linear map with orthonormalized columns before
standardizing. Anomaly flags mark the samples whose generating density falls
below a percentile threshold.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
import warnings
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .embed import TRACE_COLUMNS, Embedding
from .errors import ConfigError
from .preprocess import DataMatrix, standardize

MIN_DENSITY_WEIGHT = 0.05


@dataclass
class SpiralConfig:
    """Parameters of the density-modulated spiral generator."""

    n: int = 2000
    t_range: tuple = (3.0, 18.0)
    density_period: float = 2.5
    density_amplitude: float = 0.8
    noise_std: float = 0.05
    ambient_dim: int = 10
    anomaly_percentile: float = 5.0
    seed: int = 0
    standardize: bool = True
    orthonormal_projection: bool = True

    def __post_init__(self):
        if self.n < 10:
            raise ConfigError(f"n must be >= 10, got {self.n}")
        t0, t1 = self.t_range
        if not (math.isfinite(t0) and math.isfinite(t1) and 0 <= t0 < t1):
            raise ConfigError(f"t_range must satisfy 0 <= t_min < t_max, got {self.t_range}")
        if self.density_period <= 0:
            raise ConfigError("density_period must be positive")
        if self.density_amplitude < 0:
            raise ConfigError("density_amplitude must be >= 0")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be >= 0")
        if self.ambient_dim < 2:
            raise ConfigError("ambient_dim must be >= 2")
        if not 0 <= self.anomaly_percentile < 100:
            raise ConfigError("anomaly_percentile must lie in [0, 100)")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def density_weight(t, period: float, amplitude: float) -> np.ndarray:
    """Sampling weight w(t) = 1 + amplitude * sin(2 pi t / period), floored at 0.05."""
    w = 1.0 + amplitude * np.sin(2.0 * np.pi * np.asarray(t, dtype=np.float64) / period)
    return np.maximum(w, MIN_DENSITY_WEIGHT)


def sample_spiral(
    n: int,
    t_range: tuple,
    period: float,
    amplitude: float,
    noise_std: float,
    rng: np.random.Generator,
):
    """Rejection-sample spiral parameters and coordinates.

    Returns (t, xy) where t holds the accepted parameters and xy the noisy
    2-D spiral points (t cos t, t sin t).
    """
    t0, t1 = t_range
    w_max = 1.0 + abs(amplitude)
    accepted = []
    total = 0
    while total < n:
        prop = rng.uniform(t0, t1, size=2 * n)
        u = rng.uniform(0.0, w_max, size=2 * n)
        keep = prop[u < density_weight(prop, period, amplitude)]
        accepted.append(keep)
        total += keep.size
    t = np.concatenate(accepted)[:n]
    xy = np.stack([t * np.cos(t), t * np.sin(t)], axis=1)
    xy = xy + rng.normal(0.0, 1.0, size=(n, 2)) * noise_std
    return t, xy


def _anomaly_flags(w: np.ndarray, percentile: float) -> np.ndarray:
    """Flag the ceil(n * percentile / 100) lowest-density samples."""
    n = w.shape[0]
    count = math.ceil(n * percentile / 100.0)
    flags = np.zeros(n, dtype=bool)
    if count:
        flags[np.argsort(w, kind="stable")[:count]] = True
    return flags


def gen_density_spiral(config: SpiralConfig) -> DataMatrix:
    """Generate the high-dimensional density-modulated spiral benchmark."""
    if config.density_amplitude >= 1.0:
        warnings.warn(
            "density_amplitude >= 1 drives the sampling weight to its 0.05 "
            "floor over part of the curve; acceptance there is near zero",
            stacklevel=2,
        )
    rng = np.random.default_rng(config.seed)
    t, xy = sample_spiral(
        config.n,
        config.t_range,
        config.density_period,
        config.density_amplitude,
        config.noise_std,
        rng,
    )
    proj = rng.normal(size=(config.ambient_dim, 2))
    if config.orthonormal_projection:
        proj, _ = np.linalg.qr(proj)
    x = xy @ proj.T
    flags = _anomaly_flags(
        density_weight(t, config.density_period, config.density_amplitude),
        config.anomaly_percentile,
    )
    data = DataMatrix(x, anomaly=flags)
    if config.standardize:
        data = standardize(data)
    return data


def gen_spiral_plain(
    n: int,
    t_range: tuple = (3.0, 18.0),
    period: float = 2.5,
    amplitude: float = 0.8,
    noise_std: float = 0.05,
    seed: int = 0,
) -> DataMatrix:
    """2-D density-modulated spiral: no projection, no anomaly flags."""
    if n < 10:
        raise ConfigError(f"n must be >= 10, got {n}")
    rng = np.random.default_rng(seed)
    _, xy = sample_spiral(n, t_range, period, amplitude, noise_std, rng)
    return DataMatrix(xy)


def _atomic_write_text(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _parse_column_spec(spec, header):
    """Resolve a column given as an integer index or a header name."""
    if spec is None:
        return None
    if isinstance(spec, (int, np.integer)):
        return int(spec)
    text = str(spec)
    try:
        return int(text)
    except ValueError:
        pass
    if header is None:
        raise ConfigError(
            f"column {text!r} given by name but the file has no header"
        )
    if text not in header:
        raise ConfigError(f"column {text!r} not found in header {header}")
    return header.index(text)


_TRUE = {"1", "true", "True", "TRUE"}
_FALSE = {"0", "false", "False", "FALSE"}


def load_csv(path, has_header: bool = False, label_column=None, anomaly_column=None) -> DataMatrix:
    """Load a numeric CSV into a DataMatrix.

    ``label_column`` / ``anomaly_column`` accept an integer index or (with a
    header) a column name; those columns are pulled out of the feature block.
    Malformed input produces diagnostics with 1-based line numbers.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"input file not found: {path}")
    with open(path, newline="") as handle:
        rows = [(i + 1, row) for i, row in enumerate(csv.reader(handle)) if row]
    if not rows:
        raise ConfigError(f"{path}: empty file")
    header = None
    if has_header:
        header = [c.strip() for c in rows[0][1]]
        rows = rows[1:]
        if not rows:
            raise ConfigError(f"{path}: no data rows below the header")
    width = len(rows[0][1])
    label_idx = _parse_column_spec(label_column, header)
    anomaly_idx = _parse_column_spec(anomaly_column, header)
    for idx, name in ((label_idx, "label"), (anomaly_idx, "anomaly")):
        if idx is not None and not 0 <= idx < width:
            raise ConfigError(f"{path}: {name} column {idx} out of range for width {width}")
    if label_idx is not None and label_idx == anomaly_idx:
        raise ConfigError(f"{path}: label and anomaly columns coincide")

    special = {i for i in (label_idx, anomaly_idx) if i is not None}
    feature_cols = [i for i in range(width) if i not in special]
    if not feature_cols:
        raise ConfigError(f"{path}: no feature columns left")
    values = np.empty((len(rows), len(feature_cols)))
    labels = np.empty(len(rows), dtype=np.int64) if label_idx is not None else None
    flags = np.empty(len(rows), dtype=bool) if anomaly_idx is not None else None
    for r, (lineno, row) in enumerate(rows):
        if len(row) != width:
            raise ConfigError(
                f"{path}: line {lineno}: expected {width} fields, found {len(row)}"
            )
        for c, col in enumerate(feature_cols):
            cell = row[col].strip()
            try:
                values[r, c] = float(cell)
            except ValueError:
                raise ConfigError(
                    f"{path}: line {lineno}, column {col}: could not parse {cell!r}"
                ) from None
            if not np.isfinite(values[r, c]):
                raise ConfigError(
                    f"{path}: line {lineno}, column {col}: non-finite value {cell!r}"
                )
        if label_idx is not None:
            cell = row[label_idx].strip()
            try:
                labels[r] = int(float(cell))
            except ValueError:
                raise ConfigError(
                    f"{path}: line {lineno}, column {label_idx}: bad label {cell!r}"
                ) from None
        if anomaly_idx is not None:
            cell = row[anomaly_idx].strip()
            if cell in _TRUE:
                flags[r] = True
            elif cell in _FALSE:
                flags[r] = False
            else:
                raise ConfigError(
                    f"{path}: line {lineno}, column {anomaly_idx}: bad flag {cell!r}"
                )
    return DataMatrix(values, labels=labels, anomaly=flags)


def save_csv(data: DataMatrix, path) -> None:
    """Write a DataMatrix as CSV with a header (f0..fD-1, label, anomaly)."""
    header = [f"f{i}" for i in range(data.dim)]
    if data.labels is not None:
        header.append("label")
    if data.anomaly is not None:
        header.append("anomaly")
    lines = [",".join(header)]
    for i in range(data.n):
        cells = [_fmt(v) for v in data.values[i]]
        if data.labels is not None:
            cells.append(str(int(data.labels[i])))
        if data.anomaly is not None:
            cells.append(str(int(data.anomaly[i])))
        lines.append(",".join(cells))
    _atomic_write_text(path, "\n".join(lines) + "\n")


def sidecar_paths(path):
    """Provenance / trace paths next to an output CSV (out.csv -> out.json,
    out.trace.csv)."""
    path = Path(path)
    base = path.with_suffix("") if path.suffix == ".csv" else path
    return Path(f"{base}.json"), Path(f"{base}.trace.csv")


def save_embedding(embedding: Embedding, path) -> None:
    """Write embedding coordinates plus provenance JSON and loss-trace CSV."""
    z = embedding.z
    header = ",".join(f"dim{i}" for i in range(z.shape[1]))
    lines = [header]
    lines.extend(",".join(_fmt(v) for v in row) for row in z)
    prov_path, trace_path = sidecar_paths(path)
    _atomic_write_text(path, "\n".join(lines) + "\n")
    _atomic_write_text(prov_path, json.dumps(embedding.provenance(), indent=2) + "\n")
    trace_lines = ["iteration," + ",".join(TRACE_COLUMNS)]
    trace_lines.extend(
        f"{i}," + ",".join(_fmt(v) for v in row) for i, row in enumerate(embedding.trace)
    )
    _atomic_write_text(trace_path, "\n".join(trace_lines) + "\n")


def load_embedding(path) -> np.ndarray:
    """Read coordinates written by :func:`save_embedding`."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"embedding file not found: {path}")
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"{path}: empty file") from None
        if not all(c.startswith("dim") for c in header):
            raise ConfigError(f"{path}: not an embedding file (header {header})")
        rows = [row for row in reader if row]
    if not rows:
        raise ConfigError(f"{path}: no coordinate rows")
    try:
        return np.array([[float(c) for c in row] for row in rows])
    except ValueError as exc:
        raise ConfigError(f"{path}: bad coordinate value ({exc})") from None


def save_json(obj, path) -> None:
    """Atomically write a JSON document."""
    _atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")
