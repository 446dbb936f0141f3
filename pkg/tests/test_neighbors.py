import numpy as np
import pytest

from drsne import ConfigError, knn, pairwise_distances, pairwise_sq_distances


def brute_force_knn(x, k):
    n = x.shape[0]
    idx = np.empty((n, k), dtype=np.int64)
    dist = np.empty((n, k))
    for i in range(n):
        d = np.sqrt(((x - x[i]) ** 2).sum(axis=1))
        order = sorted((d[j], j) for j in range(n) if j != i)
        for pos in range(k):
            dist[i, pos], idx[i, pos] = order[pos]
    return idx, dist


def test_pairwise_distances_triangle_345():
    x = np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 4.0]])
    d = pairwise_distances(x)
    assert d[0, 1] == pytest.approx(3.0)
    assert d[0, 2] == pytest.approx(4.0)
    assert d[1, 2] == pytest.approx(5.0)
    assert np.all(np.diag(d) == 0.0)


def test_pairwise_sq_distances_match_double_loop():
    rng = np.random.default_rng(11)
    x = rng.normal(size=(20, 3))
    d2 = pairwise_sq_distances(x)
    for i in range(20):
        for j in range(20):
            assert d2[i, j] == pytest.approx(((x[i] - x[j]) ** 2).sum(), abs=1e-12)
    assert np.allclose(d2, d2.T)


def test_knn_matches_brute_force():
    rng = np.random.default_rng(12)
    x = rng.normal(size=(40, 4))
    graph = knn(x, 7)
    oidx, odist = brute_force_knn(x, 7)
    assert np.array_equal(graph.idx, oidx)
    assert np.allclose(graph.dist, odist, atol=1e-12)


def test_knn_distance_ties_break_by_index():
    # four corners of a square: each point has two neighbors at distance 1,
    # tied, so the smaller index must come first
    x = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    graph = knn(x, 3)
    assert list(graph.idx[0]) == [1, 2, 3]
    assert list(graph.idx[3]) == [1, 2, 0]


def test_knn_nesting():
    rng = np.random.default_rng(13)
    x = rng.normal(size=(30, 3))
    small = knn(x, 4)
    large = knn(x, 9)
    assert np.array_equal(large.idx[:, :4], small.idx)


def test_knn_permutation_equivariance():
    rng = np.random.default_rng(14)
    x = rng.normal(size=(25, 3))
    perm = rng.permutation(25)
    inv = np.argsort(perm)
    orig = knn(x, 5)
    shuf = knn(x[perm], 5)
    # neighbor sets must map through the permutation
    for new_i, old_i in enumerate(perm):
        assert sorted(inv[orig.idx[old_i]]) == sorted(shuf.idx[new_i])
        assert np.allclose(np.sort(orig.dist[old_i]), np.sort(shuf.dist[new_i]))


def test_knn_distances_sorted():
    rng = np.random.default_rng(15)
    graph = knn(rng.normal(size=(50, 6)), 10)
    assert np.all(np.diff(graph.dist, axis=1) >= 0)


def test_knn_rejects_bad_k():
    x = np.random.default_rng(16).normal(size=(10, 2))
    with pytest.raises(ConfigError):
        knn(x, 0)
    with pytest.raises(ConfigError):
        knn(x, 10)


def test_pairwise_rejects_single_row():
    with pytest.raises(ConfigError):
        pairwise_distances(np.ones((1, 3)))
