"""Command-line interface: generate, embed, evaluate, sweep, anomaly.

Exit codes: 0 success, 2 usage/configuration error, 3 runtime or numerical
error. All file outputs are written atomically, so a failed command leaves
no partial primary outputs behind. The DRSNE_THREADS environment variable
caps sweep worker parallelism; 0 or unset means fully sequential runs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from . import __version__
from .anomaly import auprc, centroid_score, iforest_score, knn_score, lof_score
from .data import (
    SpiralConfig,
    gen_density_spiral,
    gen_spiral_plain,
    load_csv,
    load_embedding,
    save_csv,
    save_embedding,
    save_json,
    sidecar_paths,
)
from .embed import OptimizerConfig, run_drsne
from .errors import ConfigError, NumericalError
from .metrics import evaluate_embedding
from .preprocess import DataMatrix, pca_fit, pca_transform, standardize

SWEEP_AXES = ("lambda", "k-density", "perplexity", "pca-dim")
DETECTORS = ("knn", "lof", "iforest", "centroid")
RUN_COLUMNS = (
    "axis_value",
    "seed",
    "tw",
    "continuity",
    "dc",
    "silhouette",
    "stress",
    "wall_seconds",
    "status",
)


def _add_spiral_args(p, ambient: bool) -> None:
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--t-min", type=float, default=3.0)
    p.add_argument("--t-max", type=float, default=18.0)
    p.add_argument("--period", type=float, default=2.5)
    p.add_argument("--amplitude", type=float, default=0.8)
    p.add_argument("--noise-std", type=float, default=0.05)
    if ambient:
        p.add_argument("--ambient-dim", type=int, default=10)
        p.add_argument("--anomaly-percentile", type=float, default=5.0)
        p.add_argument("--no-standardize", action="store_true")
    p.add_argument("-o", "--output", required=True)


def _add_embed_args(p) -> None:
    p.add_argument("--lambda", dest="lam", type=float, default=0.01,
                   help="density term weight (0 = plain sparse t-SNE)")
    p.add_argument("--perplexity", type=float, default=30.0)
    p.add_argument("--k-kl", type=int, default=None)
    p.add_argument("--k-density", type=int, default=None)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--warmup-iters", type=int, default=250)
    p.add_argument("--exaggeration", type=float, default=12.0)
    p.add_argument("--learning-rate", type=float, default=0.5)
    p.add_argument("--clip-norm", type=float, default=5.0)
    p.add_argument("--init-std", type=float, default=1e-2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dense-affinities", action="store_true",
                   help="normalize affinities over all pairs instead of the kNN support")
    p.add_argument("--density-refresh-every", type=int, default=0,
                   help="experimental: refresh density neighbor sets every T iterations")
    p.add_argument("--no-standardize", action="store_true")
    p.add_argument("--pca-dim", type=int, default=None)
    p.add_argument("--label-column", default=None)
    p.add_argument("--anomaly-column", default=None)
    p.add_argument("--no-header", action="store_true",
                   help="input CSV has no header row")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drsne",
        description="Density-regularized stochastic neighbor embedding toolkit",
    )
    parser.add_argument("--version", action="version", version=f"drsne {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic benchmark dataset")
    kinds = gen.add_subparsers(dest="kind", required=True)
    dens = kinds.add_parser("density-spiral", help="projected spiral with anomaly flags")
    _add_spiral_args(dens, ambient=True)
    dens.set_defaults(func=cmd_generate)
    plain = kinds.add_parser("spiral", help="2-D spiral, no projection or flags")
    _add_spiral_args(plain, ambient=False)
    plain.set_defaults(func=cmd_generate)

    emb = sub.add_parser("embed", help="optimize an embedding of a CSV dataset")
    emb.add_argument("-i", "--input", required=True)
    emb.add_argument("-o", "--output", required=True)
    _add_embed_args(emb)
    emb.set_defaults(func=cmd_embed)

    ev = sub.add_parser("evaluate", help="metric report for an embedding")
    ev.add_argument("--data", required=True)
    ev.add_argument("--embedding", required=True)
    ev.add_argument("--k-eval", type=int, default=30)
    ev.add_argument("--dc-method", choices=("pearson", "spearman"), default="pearson")
    ev.add_argument("--label-column", default=None)
    ev.add_argument("--anomaly-column", default=None)
    ev.add_argument("--no-header", action="store_true")
    ev.add_argument("-o", "--output", default=None, help="report JSON path (default: stdout)")
    ev.set_defaults(func=cmd_evaluate)

    sw = sub.add_parser("sweep", help="grid over one hyper-parameter axis")
    sw.add_argument("-i", "--input", required=True)
    sw.add_argument("--axis", choices=SWEEP_AXES, required=True)
    sw.add_argument("--values", required=True, help="comma-separated axis values")
    sw.add_argument("--repeats", type=int, default=1, help="seeds per value")
    sw.add_argument("--k-eval", type=int, default=30)
    sw.add_argument("--dc-method", choices=("pearson", "spearman"), default="pearson")
    sw.add_argument("-o", "--output-prefix", required=True)
    _add_embed_args(sw)
    sw.set_defaults(func=cmd_sweep)

    an = sub.add_parser("anomaly", help="score an embedding and report AUPRC")
    an.add_argument("--embedding", required=True)
    an.add_argument("--data", required=True, help="CSV holding the anomaly flag column")
    an.add_argument("--anomaly-column", default="anomaly")
    an.add_argument("--label-column", default=None)
    an.add_argument("--no-header", action="store_true")
    an.add_argument("--detectors", default="knn,lof,iforest,centroid")
    an.add_argument("--k", type=int, default=20, help="neighborhood for knn/lof")
    an.add_argument("--trees", type=int, default=100)
    an.add_argument("--subsample", type=int, default=256)
    an.add_argument("--seed", type=int, default=0)
    an.add_argument("-o", "--output-prefix", required=True)
    an.set_defaults(func=cmd_anomaly)
    return parser


def cmd_generate(args) -> int:
    if args.kind == "density-spiral":
        config = SpiralConfig(
            n=args.n,
            t_range=(args.t_min, args.t_max),
            density_period=args.period,
            density_amplitude=args.amplitude,
            noise_std=args.noise_std,
            ambient_dim=args.ambient_dim,
            anomaly_percentile=args.anomaly_percentile,
            seed=args.seed,
            standardize=not args.no_standardize,
        )
        data = gen_density_spiral(config)
        params = config.to_dict()
    else:
        data = gen_spiral_plain(
            args.n,
            t_range=(args.t_min, args.t_max),
            period=args.period,
            amplitude=args.amplitude,
            noise_std=args.noise_std,
            seed=args.seed,
        )
        params = {
            "n": args.n,
            "t_range": (args.t_min, args.t_max),
            "density_period": args.period,
            "density_amplitude": args.amplitude,
            "noise_std": args.noise_std,
            "seed": args.seed,
        }
    save_csv(data, args.output)
    prov_path, _ = sidecar_paths(args.output)
    save_json({"kind": args.kind, "rng": "numpy-pcg64", "params": params}, prov_path)
    print(f"wrote {data.n} x {data.dim} dataset to {args.output}")
    return 0


def _load_dataset(args) -> DataMatrix:
    return load_csv(
        args.input if hasattr(args, "input") else args.data,
        has_header=not args.no_header,
        label_column=args.label_column,
        anomaly_column=args.anomaly_column,
    )


def _config_from_args(args) -> OptimizerConfig:
    return OptimizerConfig(
        lam=args.lam,
        perplexity=args.perplexity,
        k_kl=args.k_kl,
        k_density=args.k_density,
        dim=args.dim,
        iterations=args.iterations,
        warmup_iters=args.warmup_iters,
        exaggeration_factor=args.exaggeration,
        learning_rate=args.learning_rate,
        clip_norm=args.clip_norm,
        init_std=args.init_std,
        seed=args.seed,
        dense_affinities=args.dense_affinities,
        density_refresh_every=args.density_refresh_every,
    )


def _preprocess(data: DataMatrix, args, pca_dim=None) -> DataMatrix:
    if not args.no_standardize:
        data = standardize(data)
    m = pca_dim if pca_dim is not None else args.pca_dim
    if m is not None:
        model = pca_fit(data, m)
        data = pca_transform(model, data)
    return data


def cmd_embed(args) -> int:
    data = _preprocess(_load_dataset(args), args)
    embedding = run_drsne(data, _config_from_args(args))
    save_embedding(embedding, args.output)
    final = embedding.trace[-1]
    print(
        f"embedded {data.n} points in {embedding.iterations_run} iterations "
        f"(final total loss {final[2]:.6f}) -> {args.output}"
    )
    return 0


def cmd_evaluate(args) -> int:
    data = load_csv(
        args.data,
        has_header=not args.no_header,
        label_column=args.label_column,
        anomaly_column=args.anomaly_column,
    )
    z = load_embedding(args.embedding)
    if z.shape[0] != data.n:
        raise ConfigError(
            f"embedding has {z.shape[0]} rows but the dataset has {data.n}"
        )
    report = evaluate_embedding(
        data.values, z, args.k_eval, labels=data.labels, dc_method=args.dc_method
    )
    if args.output:
        save_json(report.to_dict(), args.output)
        print(f"wrote metric report to {args.output}")
    else:
        print(report.to_json())
    return 0


def _sweep_values(axis: str, text: str):
    try:
        raw = [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise ConfigError(f"could not parse sweep values {text!r}") from None
    if not raw:
        raise ConfigError("no sweep values given")
    if axis in ("k-density", "pca-dim"):
        vals = []
        for v in raw:
            if v != int(v) or v < 1:
                raise ConfigError(f"axis {axis} needs positive integers, got {v}")
            vals.append(int(v))
        return vals
    if axis == "lambda" and any(v < 0 for v in raw):
        raise ConfigError("lambda values must be >= 0")
    return raw


def _sweep_run(base_data, args, base_config, axis, value, seed):
    config = replace(base_config, seed=seed)
    pca_dim = None
    if axis == "lambda":
        config = replace(config, lam=value)
    elif axis == "k-density":
        config = replace(config, k_density=value)
    elif axis == "perplexity":
        config = replace(config, perplexity=value, k_kl=args.k_kl)
    else:
        pca_dim = value
    data = _preprocess(base_data, args, pca_dim=pca_dim)
    start = time.perf_counter()
    embedding = run_drsne(data, config)
    wall = time.perf_counter() - start
    report = evaluate_embedding(
        data.values, embedding.z, args.k_eval, labels=data.labels,
        dc_method=args.dc_method,
    )
    return report, wall


def _worker_count() -> int:
    raw = os.environ.get("DRSNE_THREADS", "").strip()
    if not raw:
        return 0
    try:
        count = int(raw)
    except ValueError:
        raise ConfigError(f"DRSNE_THREADS must be an integer, got {raw!r}") from None
    return max(count, 0)


def cmd_sweep(args) -> int:
    raw = load_csv(
        args.input,
        has_header=not args.no_header,
        label_column=args.label_column,
        anomaly_column=args.anomaly_column,
    )
    if args.repeats < 1:
        raise ConfigError("repeats must be >= 1")
    values = _sweep_values(args.axis, args.values)
    base_config = _config_from_args(args)
    jobs = [
        (vi, value, args.seed + r)
        for vi, value in enumerate(values)
        for r in range(args.repeats)
    ]

    def run_one(job):
        _, value, seed = job
        try:
            report, wall = _sweep_run(raw, args, base_config, args.axis, value, seed)
            return job, report, wall, "ok"
        except (ConfigError, NumericalError) as exc:
            return job, None, None, f"failed: {exc}"

    workers = _worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_one, jobs))
    else:
        results = [run_one(job) for job in jobs]
    results.sort(key=lambda item: (item[0][0], item[0][2]))

    def fmt(x):
        return "" if x is None else f"{x:.17g}"

    rows = [",".join(RUN_COLUMNS)]
    by_value = {}
    for (vi, value, seed), report, wall, status in results:
        cells = [f"{value:.17g}", str(seed)]
        if report is None:
            cells += [""] * 6
        else:
            sil = report.silhouette
            cells += [
                fmt(report.trustworthiness),
                fmt(report.continuity),
                fmt(report.density_correlation),
                fmt(sil),
                fmt(report.stress),
                fmt(wall),
            ]
            by_value.setdefault(vi, []).append((report, wall))
        cells.append(status.replace(",", ";"))
        rows.append(",".join(cells))

    metric_names = ("tw", "continuity", "dc", "silhouette", "stress", "wall_seconds")
    header = ["axis", "axis_value", "n_ok"]
    for name in metric_names:
        header += [f"{name}_mean", f"{name}_std"]
    summary = [",".join(header)]
    for vi, value in enumerate(values):
        runs = by_value.get(vi, [])
        cells = [args.axis, f"{value:.17g}", str(len(runs))]
        for name in metric_names:
            if not runs:
                cells += ["", ""]
                continue
            if name == "wall_seconds":
                col = [w for _, w in runs]
            elif name == "silhouette":
                col = [r.silhouette for r, _ in runs]
                if any(v is None for v in col):
                    cells += ["", ""]
                    continue
            else:
                attr = {"tw": "trustworthiness", "dc": "density_correlation"}.get(name, name)
                col = [getattr(r, attr) for r, _ in runs]
            arr = np.asarray(col, dtype=np.float64)
            cells += [f"{arr.mean():.17g}", f"{arr.std():.17g}"]
        summary.append(",".join(cells))

    from .data import _atomic_write_text

    runs_path = f"{args.output_prefix}_runs.csv"
    summary_path = f"{args.output_prefix}_summary.csv"
    _atomic_write_text(runs_path, "\n".join(rows) + "\n")
    _atomic_write_text(summary_path, "\n".join(summary) + "\n")
    failed = sum(1 for _, report, _, _ in results if report is None)
    print(
        f"swept {args.axis} over {len(values)} values x {args.repeats} repeats "
        f"({failed} failed) -> {runs_path}, {summary_path}"
    )
    return 0


def cmd_anomaly(args) -> int:
    data = load_csv(
        args.data,
        has_header=not args.no_header,
        label_column=args.label_column,
        anomaly_column=args.anomaly_column,
    )
    if data.anomaly is None:
        raise ConfigError(f"{args.data}: no anomaly flag column loaded")
    z = load_embedding(args.embedding)
    if z.shape[0] != data.n:
        raise ConfigError(
            f"embedding has {z.shape[0]} rows but the dataset has {data.n}"
        )
    names = [d.strip() for d in args.detectors.split(",") if d.strip()]
    for name in names:
        if name not in DETECTORS:
            raise ConfigError(f"unknown detector {name!r}; choose from {DETECTORS}")
    if not names:
        raise ConfigError("no detectors selected")

    report = {"anomaly_rate": float(data.anomaly.mean()),
              "auprc_method": "average_precision_step",
              "detectors": []}
    outputs = []
    for name in names:
        if name == "knn":
            scored = knn_score(z, k=args.k)
        elif name == "lof":
            scored = lof_score(z, k=args.k)
        elif name == "iforest":
            scored = iforest_score(z, trees=args.trees, subsample=args.subsample,
                                   seed=args.seed)
        else:
            scored = centroid_score(z)
        value = auprc(scored.scores, data.anomaly)
        report["detectors"].append(
            {"detector": name, "params": scored.params, "auprc": value}
        )
        lines = ["index,score,is_anomaly"]
        lines.extend(
            f"{i},{score:.17g},{int(flag)}"
            for i, (score, flag) in enumerate(zip(scored.scores, data.anomaly))
        )
        outputs.append((f"{args.output_prefix}_scores_{name}.csv", "\n".join(lines) + "\n"))

    from .data import _atomic_write_text

    for path, text in outputs:
        _atomic_write_text(path, text)
    save_json(report, f"{args.output_prefix}_auprc.json")
    for entry in report["detectors"]:
        print(f"{entry['detector']}: AUPRC {entry['auprc']:.4f}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        msg = str(exc)
        if exc.iteration is not None:
            msg += f" (iteration {exc.iteration})"
        print(f"numerical error: {msg}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
