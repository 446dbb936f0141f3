import numpy as np
import pytest

from drsne import (
    ConfigError,
    DataMatrix,
    OptimizerConfig,
    SpiralConfig,
    density_weight,
    gen_density_spiral,
    gen_spiral_plain,
    load_csv,
    load_embedding,
    run_drsne,
    sample_spiral,
    save_csv,
    save_embedding,
)
from drsne.data import MIN_DENSITY_WEIGHT, sidecar_paths
from drsne.density import pearson


def test_density_weight_shape_and_floor():
    crest, trough = 0.625, 1.875  # sin argument pi/2 and 3*pi/2 for period 2.5
    assert density_weight(np.array([crest]), 2.5, 0.8)[0] == pytest.approx(1.8, abs=1e-12)
    assert density_weight(np.array([trough]), 2.5, 0.8)[0] == pytest.approx(0.2, abs=1e-12)
    t = np.linspace(0, 10, 500)
    assert density_weight(t, 2.5, 0.8).min() >= MIN_DENSITY_WEIGHT
    # amplitude above 1 would dip negative without the floor
    assert density_weight(np.array([trough]), 2.5, 1.5)[0] == MIN_DENSITY_WEIGHT


def test_sample_spiral_radius_identity():
    rng = np.random.default_rng(100)
    t, xy = sample_spiral(500, (3.0, 18.0), 2.5, 0.8, 0.0, rng)
    # with zero noise, every sample satisfies x^2 + y^2 = t^2
    assert np.allclose(xy[:, 0] ** 2 + xy[:, 1] ** 2, t**2, atol=1e-9)
    assert np.all((t >= 3.0) & (t <= 18.0))


def test_sample_spiral_density_follows_weight():
    # histogram of accepted t values should correlate with the target weight
    rng = np.random.default_rng(101)
    t, _ = sample_spiral(40_000, (3.0, 18.0), 2.5, 0.8, 0.0, rng)
    counts, edges = np.histogram(t, bins=60, range=(3.0, 18.0))
    mids = 0.5 * (edges[:-1] + edges[1:])
    w = density_weight(mids, 2.5, 0.8)
    assert pearson(counts.astype(float), w) > 0.9


def test_gen_density_spiral_deterministic():
    cfg = SpiralConfig(n=300, seed=9)
    a = gen_density_spiral(cfg)
    b = gen_density_spiral(cfg)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.anomaly, b.anomaly)
    c = gen_density_spiral(SpiralConfig(n=300, seed=10))
    assert not np.array_equal(a.values, c.values)


def test_gen_density_spiral_shapes_and_flags():
    cfg = SpiralConfig(n=400, ambient_dim=10, anomaly_percentile=5.0, seed=2)
    data = gen_density_spiral(cfg)
    assert data.values.shape == (400, 10)
    assert data.anomaly is not None
    expected = int(np.ceil(400 * 5.0 / 100.0))
    assert abs(int(data.anomaly.sum()) - expected) <= 1
    zero = gen_density_spiral(SpiralConfig(n=400, anomaly_percentile=0.0, seed=2))
    assert int(zero.anomaly.sum()) == 0


def test_gen_density_spiral_flags_sparse_regions():
    # anomalies are the lowest-target-density samples, which are rarer by
    # construction, so their local kNN density should also be low
    from drsne import knn, knn_density

    data = gen_density_spiral(SpiralConfig(n=1000, seed=4))
    est = knn_density(knn(data.values, 20))
    flagged = est.rho_tilde[data.anomaly].mean()
    normal = est.rho_tilde[~data.anomaly].mean()
    assert flagged < normal


def test_gen_density_spiral_projection_is_isometric():
    cfg = SpiralConfig(n=200, ambient_dim=8, standardize=False, seed=5)
    data = gen_density_spiral(cfg)
    # replay the generator's sampling stream to recover the 2-D coordinates
    rng = np.random.default_rng(5)
    _, xy = sample_spiral(200, cfg.t_range, cfg.density_period, cfg.density_amplitude, cfg.noise_std, rng)
    da = np.sqrt(((data.values[:, None] - data.values[None]) ** 2).sum(-1))
    db = np.sqrt(((xy[:, None] - xy[None]) ** 2).sum(-1))
    assert np.allclose(da, db, atol=1e-9)


def test_gen_density_spiral_standardized_columns():
    data = gen_density_spiral(SpiralConfig(n=300, seed=6))
    assert np.allclose(data.values.mean(axis=0), 0.0, atol=1e-10)
    assert np.allclose(data.values.std(axis=0), 1.0, atol=1e-10)


def test_gen_density_spiral_warns_on_large_amplitude():
    with pytest.warns(UserWarning):
        gen_density_spiral(SpiralConfig(n=100, density_amplitude=1.2, seed=0))


def test_gen_spiral_plain_is_two_dimensional():
    data = gen_spiral_plain(250, seed=3)
    assert data.values.shape == (250, 2)
    assert data.anomaly is None
    assert data.labels is None
    again = gen_spiral_plain(250, seed=3)
    assert np.array_equal(data.values, again.values)


def test_spiral_config_validation():
    with pytest.raises(ConfigError):
        SpiralConfig(n=3)
    with pytest.raises(ConfigError):
        SpiralConfig(t_range=(5.0, 5.0))
    with pytest.raises(ConfigError):
        SpiralConfig(ambient_dim=1)
    with pytest.raises(ConfigError):
        SpiralConfig(anomaly_percentile=120.0)
    with pytest.raises(ConfigError):
        SpiralConfig(noise_std=-0.1)


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(102)
    data = DataMatrix(
        rng.normal(size=(20, 3)),
        labels=rng.integers(0, 4, size=20),
        anomaly=rng.random(20) < 0.3,
    )
    path = tmp_path / "round.csv"
    save_csv(data, path)
    back = load_csv(path, has_header=True, label_column="label", anomaly_column="anomaly")
    assert np.allclose(back.values, data.values, atol=0)  # .17g is exact for doubles
    assert np.array_equal(back.labels, data.labels)
    assert np.array_equal(back.anomaly, data.anomaly)


def test_load_csv_column_by_index(tmp_path):
    path = tmp_path / "plain.csv"
    path.write_text("1.0,2.0,0\n3.0,4.0,1\n5.0,6.0,0\n")
    data = load_csv(path, label_column=2)
    assert data.values.shape == (3, 2)
    assert list(data.labels) == [0, 1, 0]


def test_load_csv_diagnostics(tmp_path):
    ragged = tmp_path / "ragged.csv"
    ragged.write_text("1.0,2.0\n3.0\n")
    with pytest.raises(ConfigError, match="line 2"):
        load_csv(ragged)

    bad = tmp_path / "bad.csv"
    bad.write_text("1.0,2.0\n3.0,oops\n")
    with pytest.raises(ConfigError, match="line 2"):
        load_csv(bad)

    inf = tmp_path / "inf.csv"
    inf.write_text("1.0,2.0\n3.0,inf\n")
    with pytest.raises(ConfigError, match="line 2"):
        load_csv(inf)

    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(ConfigError):
        load_csv(empty)


def test_save_embedding_round_trip(tmp_path):
    rng = np.random.default_rng(103)
    x = rng.normal(size=(30, 4))
    emb = run_drsne(x, OptimizerConfig(iterations=12, warmup_iters=4, perplexity=3.0, k_kl=9, seed=1))
    out = tmp_path / "emb.csv"
    save_embedding(emb, out)

    z = load_embedding(out)
    assert np.array_equal(z, emb.z)

    meta_path, trace_path = sidecar_paths(out)
    assert meta_path.exists() and trace_path.exists()
    import json

    meta = json.loads(meta_path.read_text())
    assert meta["seed"] == 1
    assert meta["config"]["iterations"] == 12
    trace_lines = trace_path.read_text().strip().splitlines()
    assert trace_lines[0] == "iteration,kl_loss,dens_loss,total,grad_norm"
    assert len(trace_lines) == 1 + 12


def test_load_embedding_rejects_foreign_header(tmp_path):
    path = tmp_path / "foreign.csv"
    path.write_text("a,b\n1.0,2.0\n")
    with pytest.raises(ConfigError):
        load_embedding(path)
