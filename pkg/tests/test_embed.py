import numpy as np
import pytest

from drsne import (
    AffinityMatrix,
    ConfigError,
    NumericalError,
    OptimizerConfig,
    calibrate_betas,
    joint_affinities,
    kl_gradient,
    kl_loss,
    knn,
    run_drsne,
    student_t_similarities,
)
from drsne.embed import TRACE_COLUMNS


def uniform_triangle_affinities():
    """All three unordered pairs carry 1/6, both directions on the support."""
    sixth = np.full(3, 1.0 / 6.0)
    return AffinityMatrix(
        n=3,
        pair_i=np.array([0, 0, 1]),
        pair_j=np.array([1, 2, 2]),
        pair_p=sixth,
        knn_i=np.array([0, 0, 1, 1, 2, 2]),
        knn_j=np.array([1, 2, 0, 2, 0, 1]),
        knn_p=np.full(6, 1.0 / 6.0),
    )


def test_student_t_two_points_split_evenly():
    q = student_t_similarities(np.array([[0.0, 0.0], [3.0, 4.0]]))
    assert q[0, 1] == pytest.approx(0.5)
    assert q[1, 0] == pytest.approx(0.5)
    assert q[0, 0] == 0.0


def test_student_t_equilateral_uniform():
    z = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]])
    q = student_t_similarities(z)
    off = q[~np.eye(3, dtype=bool)]
    assert np.allclose(off, 1.0 / 6.0, atol=1e-15)


def test_student_t_matches_double_loop():
    rng = np.random.default_rng(50)
    z = rng.normal(size=(15, 2))
    q = student_t_similarities(z)
    n = 15
    w = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                w[i, j] = 1.0 / (1.0 + ((z[i] - z[j]) ** 2).sum())
    oracle = w / w.sum()
    assert np.allclose(q, oracle, atol=1e-14)


def test_student_t_ordered_sum_is_one():
    rng = np.random.default_rng(51)
    for n in (2, 10, 200):
        q = student_t_similarities(rng.normal(size=(n, 3)))
        assert q.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(np.diag(q) == 0.0)


def test_kl_loss_zero_at_matching_distribution():
    # any equilateral triangle gives uniform similarities, matching uniform
    # affinities exactly
    p = uniform_triangle_affinities()
    z = 2.5 * np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]])
    assert kl_loss(p, student_t_similarities(z)) == pytest.approx(0.0, abs=1e-15)


def test_kl_loss_collinear_frozen_value():
    # z = 0, 1, 2 on a line against uniform affinities: w = (1/2, 1/2, 1/5),
    # q = (5/24, 5/24, 1/12), so KL = ln(32/25) / 9
    p = uniform_triangle_affinities()
    z = np.array([[0.0], [1.0], [2.0]])
    expected = np.log(32.0 / 25.0) / 9.0
    assert kl_loss(p, student_t_similarities(z)) == pytest.approx(expected, rel=1e-12)


def test_kl_gradient_zero_at_optimum():
    p = uniform_triangle_affinities()
    z = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]])
    assert np.allclose(kl_gradient(p, z), 0.0, atol=1e-14)


def test_kl_gradient_matches_finite_differences():
    rng = np.random.default_rng(52)
    x = rng.normal(size=(14, 5))
    graph = knn(x, 6)
    p = joint_affinities(graph, calibrate_betas(graph, 3.0))
    z = rng.normal(size=(14, 2))
    grad = kl_gradient(p, z)

    eps = 1e-6
    worst = 0.0
    for i in range(14):
        for d in range(2):
            zp = z.copy()
            zp[i, d] += eps
            zm = z.copy()
            zm[i, d] -= eps
            fd = (
                kl_loss(p, student_t_similarities(zp))
                - kl_loss(p, student_t_similarities(zm))
            ) / (2 * eps)
            worst = max(worst, abs(grad[i, d] - fd) / max(abs(fd), 1e-12))
    assert worst <= 1e-4


def test_kl_gradient_rows_sum_to_zero():
    rng = np.random.default_rng(53)
    x = rng.normal(size=(20, 4))
    graph = knn(x, 8)
    p = joint_affinities(graph, calibrate_betas(graph, 4.0))
    grad = kl_gradient(p, rng.normal(size=(20, 2)))
    assert np.allclose(grad.sum(axis=0), 0.0, atol=1e-12)


def small_config(**kw):
    base = dict(iterations=60, warmup_iters=20, perplexity=4.0, k_kl=12, seed=3)
    base.update(kw)
    return OptimizerConfig(**base)


def test_run_drsne_deterministic():
    rng = np.random.default_rng(54)
    x = rng.normal(size=(40, 6))
    a = run_drsne(x, small_config())
    b = run_drsne(x, small_config())
    assert a.z.tobytes() == b.z.tobytes()
    assert np.array_equal(a.trace, b.trace)
    c = run_drsne(x, small_config(seed=4))
    assert not np.array_equal(a.z, c.z)


def test_run_drsne_trace_layout_and_staging():
    rng = np.random.default_rng(55)
    x = rng.normal(size=(40, 5))
    cfg = small_config(lam=0.05)
    emb = run_drsne(x, cfg)
    assert TRACE_COLUMNS == ("kl_loss", "dens_loss", "total", "grad_norm")
    assert emb.trace.shape == (60, 4)
    assert np.all(np.isfinite(emb.trace))
    kl, dens, total, gnorm = emb.trace.T
    # warm-up rows: the staged total is the (exaggerated) KL term alone
    assert np.allclose(total[:20], kl[:20], atol=0)
    # afterwards the density term joins at full weight
    assert np.allclose(total[20:], kl[20:] + 0.05 * dens[20:], atol=1e-15)
    # density loss is measured every iteration, including warm-up
    assert np.all(dens > 0)
    assert np.all(gnorm <= cfg.clip_norm + 1e-12)


def test_run_drsne_kl_decreases_after_warmup():
    rng = np.random.default_rng(56)
    x = rng.normal(size=(60, 4))
    emb = run_drsne(x, small_config(iterations=220, warmup_iters=40, lam=0.01))
    kl = emb.trace[:, 0]
    assert kl[-1] < kl[40]


def test_run_drsne_lambda_zero_ignores_density_k():
    rng = np.random.default_rng(57)
    x = rng.normal(size=(36, 4))
    a = run_drsne(x, small_config(lam=0.0, k_density=5))
    b = run_drsne(x, small_config(lam=0.0, k_density=30))
    assert a.z.tobytes() == b.z.tobytes()
    assert np.allclose(a.trace[:, 2], a.trace[:, 0])
    # the recorded density losses still reflect the different neighborhoods
    assert not np.allclose(a.trace[:, 1], b.trace[:, 1])


def test_run_drsne_dense_flag_matches_full_k():
    rng = np.random.default_rng(58)
    x = rng.normal(size=(30, 4))
    a = run_drsne(x, small_config(dense_affinities=True, k_kl=None))
    b = run_drsne(x, small_config(k_kl=29))
    assert a.z.tobytes() == b.z.tobytes()


def test_run_drsne_provenance_contents():
    rng = np.random.default_rng(59)
    x = rng.normal(size=(32, 4))
    cfg = small_config(lam=0.02)
    emb = run_drsne(x, cfg)
    prov = emb.provenance()
    assert prov["seed"] == 3
    assert prov["rng"] == "numpy-pcg64"
    assert prov["iterations_run"] == 60
    assert prov["config"]["lam"] == 0.02
    assert prov["config"]["warmup_iters"] == 20
    summary = prov["loss_trace_summary"]
    assert summary["final"]["kl_loss"] == emb.trace[-1, 0]
    assert summary["min_total"] <= summary["initial_total"]
    assert emb.mean_seconds_per_iteration > 0


def test_run_drsne_rejects_bad_configs():
    rng = np.random.default_rng(60)
    x = rng.normal(size=(20, 3))
    with pytest.raises(ConfigError):
        run_drsne(x[:3], small_config())
    for bad in (
        small_config(dim=5),
        small_config(perplexity=12.0),  # >= k_kl
        small_config(warmup_iters=100),  # > iterations
        small_config(lam=-0.1),
        small_config(k_density=50),  # > n - 1
        small_config(learning_rate=0.0),
        small_config(exaggeration_factor=0.5),
    ):
        with pytest.raises(ConfigError):
            run_drsne(x, bad)


def test_run_drsne_reports_divergence():
    rng = np.random.default_rng(61)
    x = rng.normal(size=(24, 3))
    cfg = small_config(learning_rate=1e200)
    with np.errstate(all="ignore"), pytest.raises(NumericalError) as exc:
        run_drsne(x, cfg)
    err = exc.value
    assert err.iteration >= 0
    assert err.last_state.shape == (24, 2)
    assert np.all(np.isfinite(err.last_state))
