"""Density-regularized stochastic neighbor embedding.

Embeds high-dimensional data into 1-3 dimensions while preserving both
local neighborhoods (a sparse KL objective on perplexity-calibrated
affinities) and relative sample density (a squared log-density discrepancy
between the two spaces). Ships evaluation metrics and embedding-space
anomaly detectors alongside the optimizer.
"""

from .affinity import (
    AffinityMatrix,
    PerplexityCalibration,
    calibrate_betas,
    exaggerate,
    joint_affinities,
)
from .anomaly import (
    AnomalyScores,
    auprc,
    average_path_length,
    centroid_score,
    iforest_score,
    knn_score,
    lof_score,
)
from .data import (
    SpiralConfig,
    density_weight,
    gen_density_spiral,
    gen_spiral_plain,
    load_csv,
    load_embedding,
    sample_spiral,
    save_csv,
    save_embedding,
)
from .density import (
    DensityEstimate,
    density_correlation,
    density_loss,
    density_loss_and_gradient,
    density_loss_gradient,
    knn_density,
)
from .embed import (
    Embedding,
    OptimizerConfig,
    kl_gradient,
    kl_loss,
    run_drsne,
    student_t_similarities,
)
from .errors import ConfigError, NumericalError
from .metrics import (
    MetricReport,
    continuity,
    evaluate_embedding,
    silhouette,
    stress,
    trustworthiness,
)
from .neighbors import NeighborGraph, knn, pairwise_distances, pairwise_sq_distances
from .preprocess import DataMatrix, PcaModel, pca_fit, pca_transform, standardize

__version__ = "0.1.0"

__all__ = [
    "AffinityMatrix",
    "AnomalyScores",
    "ConfigError",
    "DataMatrix",
    "DensityEstimate",
    "Embedding",
    "MetricReport",
    "NeighborGraph",
    "NumericalError",
    "OptimizerConfig",
    "PcaModel",
    "PerplexityCalibration",
    "SpiralConfig",
    "auprc",
    "average_path_length",
    "calibrate_betas",
    "centroid_score",
    "continuity",
    "density_correlation",
    "density_loss",
    "density_loss_and_gradient",
    "density_loss_gradient",
    "density_weight",
    "evaluate_embedding",
    "exaggerate",
    "gen_density_spiral",
    "gen_spiral_plain",
    "iforest_score",
    "joint_affinities",
    "kl_gradient",
    "kl_loss",
    "knn",
    "knn_density",
    "knn_score",
    "load_csv",
    "load_embedding",
    "lof_score",
    "pairwise_distances",
    "pairwise_sq_distances",
    "pca_fit",
    "pca_transform",
    "run_drsne",
    "sample_spiral",
    "save_csv",
    "save_embedding",
    "silhouette",
    "standardize",
    "stress",
    "student_t_similarities",
    "trustworthiness",
]
