"""Joint neighbor-embedding / density-matching optimizer.

The objective is a sparse KL divergence between calibrated input-space
affinities and Student-t similarities in the embedding, plus a weighted
log-density discrepancy term. Optimization is staged: an early phase runs
the KL term alone on exaggerated affinities, after which the affinities
revert and the density term switches on at full weight. Updates use Adam
with global-norm gradient clipping.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, fields

import numpy as np

from .affinity import AffinityMatrix, calibrate_betas, exaggerate, joint_affinities
from .density import DensityEstimate, density_loss_and_gradient, knn_density
from .errors import ConfigError, NumericalError
from .neighbors import knn, pairwise_sq_distances
from .preprocess import as_matrix

RNG_NAME = "numpy-pcg64"
TRACE_COLUMNS = ("kl_loss", "dens_loss", "total", "grad_norm")


@dataclass
class OptimizerConfig:
    """Hyper-parameters for :func:`run_drsne`.

    ``k_kl`` and ``k_density`` default to min(3 * perplexity, n - 1) and
    min(300, n - 1) respectively when left as None. ``lam`` weights the
    density term; 0 reduces the objective to plain sparse t-SNE.
    """

    lam: float = 0.01
    perplexity: float = 30.0
    k_kl: int | None = None
    k_density: int | None = None
    dim: int = 2
    iterations: int = 1000
    warmup_iters: int = 250
    exaggeration_factor: float = 12.0
    learning_rate: float = 0.5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float = 5.0
    init_std: float = 1e-2
    seed: int = 0
    dense_affinities: bool = False
    density_refresh_every: int = 0

    def resolved_k_kl(self, n: int) -> int:
        if self.dense_affinities:
            return n - 1
        if self.k_kl is None:
            return min(int(round(3 * self.perplexity)), n - 1)
        return self.k_kl

    def resolved_k_density(self, n: int) -> int:
        if self.k_density is None:
            return min(300, n - 1)
        return self.k_density

    def validate(self, n: int) -> None:
        if n < 4:
            raise ConfigError(f"need at least 4 points to embed, got {n}")
        if self.dim not in (1, 2, 3):
            raise ConfigError(f"dim must be 1, 2, or 3, got {self.dim}")
        k_kl = self.resolved_k_kl(n)
        k_density = self.resolved_k_density(n)
        for name, k in (("k_kl", k_kl), ("k_density", k_density)):
            if not 1 <= k <= n - 1:
                raise ConfigError(f"{name} must be in [1, n-1] = [1, {n - 1}], got {k}")
        if not self.perplexity < k_kl:
            raise ConfigError(
                f"perplexity ({self.perplexity}) must be < k_kl ({k_kl})"
            )
        if self.lam < 0 or not np.isfinite(self.lam):
            raise ConfigError(f"lam must be a finite real >= 0, got {self.lam}")
        if self.iterations < 1:
            raise ConfigError("iterations must be positive")
        if not 0 <= self.warmup_iters <= self.iterations:
            raise ConfigError(
                f"warmup_iters ({self.warmup_iters}) must lie in "
                f"[0, iterations] = [0, {self.iterations}]"
            )
        if self.exaggeration_factor < 1:
            raise ConfigError("exaggeration_factor must be >= 1")
        for name in ("learning_rate", "clip_norm", "init_std"):
            v = getattr(self, name)
            if v <= 0 or not np.isfinite(v):
                raise ConfigError(f"{name} must be a finite positive real, got {v}")
        if self.density_refresh_every < 0:
            raise ConfigError("density_refresh_every must be >= 0")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class Embedding:
    """Optimized coordinates plus the per-iteration loss trace.

    ``trace`` has one row per iteration with columns ``TRACE_COLUMNS``:
    KL loss, unweighted density loss, the staged total, and the post-clip
    global gradient norm.
    """

    z: np.ndarray
    config: OptimizerConfig
    seed: int
    iterations_run: int
    trace: np.ndarray
    mean_seconds_per_iteration: float
    rng_name: str = RNG_NAME
    metrics: dict | None = field(default=None)

    def provenance(self) -> dict:
        final = dict(zip(TRACE_COLUMNS, self.trace[-1].tolist()))
        summary = {
            "iterations": self.iterations_run,
            "initial_total": float(self.trace[0, 2]),
            "final": final,
            "min_total": float(self.trace[:, 2].min()),
        }
        out = {
            "seed": self.seed,
            "rng": self.rng_name,
            "config": self.config.to_dict(),
            "iterations_run": self.iterations_run,
            "mean_seconds_per_iteration": self.mean_seconds_per_iteration,
            "loss_trace_summary": summary,
        }
        if self.metrics is not None:
            out["metrics"] = self.metrics
        return out


def _student_t_kernel(z: np.ndarray):
    """Unnormalized Student-t weights w_ij = 1/(1+d_ij^2) and their total."""
    w = 1.0 / (1.0 + pairwise_sq_distances(z))
    np.fill_diagonal(w, 0.0)
    return w, float(w.sum())


def _kernel_into(z: np.ndarray, buf: np.ndarray, tmp: np.ndarray) -> float:
    """Fill ``buf`` with the Student-t kernel of ``z`` without extra allocation.

    Uses the Gram identity d_ij^2 = |z_i|^2 + |z_j|^2 - 2 z_i.z_j; the tiny
    negative round-off it can produce is harmless because the kernel never
    takes a square root.
    """
    np.matmul(z, z.T, out=tmp)
    sq = np.einsum("nd,nd->n", z, z)
    np.add.outer(sq, sq, out=buf)
    tmp *= -2.0
    buf += tmp
    buf += 1.0
    np.reciprocal(buf, out=buf)
    np.fill_diagonal(buf, 0.0)
    return float(buf.sum())


def student_t_similarities(z) -> np.ndarray:
    """Dense Student-t similarity matrix; ordered entries sum to 1, diag 0."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 2:
        raise ConfigError("z must be an n x d array with n >= 2")
    w, s = _student_t_kernel(z)
    return w / s


def kl_loss(p: AffinityMatrix, q: np.ndarray) -> float:
    """Sparse KL divergence (1/n) sum_i sum_{j in N_k(i)} p_ij log(p_ij / q_ij).

    The sum runs over the directed kNN edges recorded in ``p``; pairs kept
    by only one direction therefore contribute once. Zero-affinity terms
    contribute zero.
    """
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (p.n, p.n):
        raise ConfigError(f"q must be {p.n} x {p.n}")
    qe = np.maximum(q[p.knn_i, p.knn_j], np.finfo(np.float64).tiny)
    vals = p.knn_p
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(vals > 0, vals * (np.log(vals) - np.log(qe)), 0.0)
    return float(terms.sum() / p.n)


def _attraction_gradient(p_edges, edge_i, edge_j, w_edges, z) -> np.ndarray:
    """Sum over directed edges of 2 p_e w_e (z_a - z_b), scattered to both ends."""
    n, d = z.shape
    coef = p_edges * w_edges
    dz = z[edge_i] - z[edge_j]
    grad = np.empty_like(z)
    for dim in range(d):
        weighted = coef * dz[:, dim]
        grad[:, dim] = np.bincount(edge_i, weights=weighted, minlength=n)
        grad[:, dim] -= np.bincount(edge_j, weights=weighted, minlength=n)
    return 2.0 * grad


def _kl_gradient_parts(p_edges, edge_i, edge_j, mass, z, w, s, w_edges):
    """Full sparse-attraction / dense-repulsion KL gradient.

    ``w`` is consumed: it is squared in place for the repulsive term.
    """
    n = z.shape[0]
    grad = _attraction_gradient(p_edges, edge_i, edge_j, w_edges, z)
    w *= w
    grad -= (4.0 * mass / s) * (z * w.sum(axis=1)[:, None] - w @ z)
    grad /= n
    return grad


def kl_gradient(p: AffinityMatrix, z) -> np.ndarray:
    """Gradient of :func:`kl_loss` (with q = Student-t similarities of z)."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[0] != p.n:
        raise ConfigError("p and z disagree on the number of points")
    w, s = _student_t_kernel(z)
    w_edges = w[p.knn_i, p.knn_j]
    return _kl_gradient_parts(
        p.knn_p, p.knn_i, p.knn_j, p.directed_mass(), z, w, s, w_edges
    )


def _edge_loss_terms(p: AffinityMatrix):
    """Constant pieces of the sparse KL loss: sum p log p and total mass."""
    vals = p.knn_p
    plogp = float(np.where(vals > 0, vals * np.log(np.maximum(vals, 1e-300)), 0.0).sum())
    return plogp, p.directed_mass()


def run_drsne(data, config: OptimizerConfig | None = None) -> Embedding:
    """Optimize a low-dimensional embedding of (preprocessed) data.

    Returns an :class:`Embedding` whose provenance records the seed, the
    full configuration, and a loss-trace summary. Raises
    :class:`NumericalError` if the optimization produces non-finite values.
    """
    config = config or OptimizerConfig()
    x = as_matrix(data).values
    n = x.shape[0]
    config.validate(n)
    k_kl = config.resolved_k_kl(n)
    k_density = config.resolved_k_density(n)

    graph = knn(x, k_kl)
    calibration = calibrate_betas(graph, config.perplexity)
    p_plain = joint_affinities(graph, calibration)
    p_early = exaggerate(p_plain, config.exaggeration_factor)

    density_graph = knn(x, k_density)
    high_density = knn_density(density_graph)
    density_idx = density_graph.idx

    plogp_plain, mass_plain = _edge_loss_terms(p_plain)
    plogp_early, mass_early = _edge_loss_terms(p_early)
    edge_i, edge_j = p_plain.knn_i, p_plain.knn_j

    rng = np.random.default_rng(config.seed)
    z = rng.normal(0.0, config.init_std, size=(n, config.dim))
    m = np.zeros_like(z)
    v = np.zeros_like(z)
    trace = np.empty((config.iterations, len(TRACE_COLUMNS)))
    b1, b2, eps = config.adam_beta1, config.adam_beta2, config.adam_eps
    kernel = np.empty((n, n))
    scratch = np.empty((n, n))

    start = time.perf_counter()
    for t in range(config.iterations):
        warm = t < config.warmup_iters
        if warm:
            mass, plogp, p_edges = mass_early, plogp_early, p_early.knn_p
        else:
            mass, plogp, p_edges = mass_plain, plogp_plain, p_plain.knn_p

        s = _kernel_into(z, kernel, scratch)
        w_edges = kernel[edge_i, edge_j]
        kl = (plogp - float(p_edges @ np.log(w_edges)) + mass * np.log(s)) / n

        if (
            config.density_refresh_every
            and not warm
            and (t - config.warmup_iters) % config.density_refresh_every == 0
            and t > config.warmup_iters
        ):
            density_idx = knn(z, k_density).idx
        need_density_grad = (not warm) and config.lam > 0
        dens, dens_grad = density_loss_and_gradient(
            high_density, z, density_idx, with_gradient=need_density_grad
        )

        grad = _kl_gradient_parts(
            p_edges, edge_i, edge_j, mass, z, kernel, s, w_edges
        )
        total = kl
        if need_density_grad:
            grad += config.lam * dens_grad
        if not warm:
            total = kl + config.lam * dens

        gnorm = float(np.sqrt((grad * grad).sum()))
        if gnorm > config.clip_norm:
            grad *= config.clip_norm / gnorm
            gnorm = config.clip_norm

        step = t + 1
        m = b1 * m + (1.0 - b1) * grad
        v = b2 * v + (1.0 - b2) * grad * grad
        m_hat = m / (1.0 - b1**step)
        v_hat = v / (1.0 - b2**step)
        z_next = z - config.learning_rate * m_hat / (np.sqrt(v_hat) + eps)

        if not (np.isfinite(kl) and np.isfinite(dens) and np.all(np.isfinite(z_next))):
            raise NumericalError(
                f"non-finite loss or coordinates at iteration {t}",
                iteration=t,
                last_state=z,
            )
        z = z_next
        trace[t] = (kl, dens, total, gnorm)
    elapsed = time.perf_counter() - start

    return Embedding(
        z=z,
        config=config,
        seed=config.seed,
        iterations_run=config.iterations,
        trace=trace,
        mean_seconds_per_iteration=elapsed / config.iterations,
    )
