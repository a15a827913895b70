"""Command-line entry points.

Subcommands: featurize, generate, compare, ablate, optimize, analyze.
Every randomized command requires an explicit --seed; given identical
inputs, flags and seed, a command writes byte-identical outputs for any
worker count. Each run directory receives resolved_config.json and
status.json (input hashes, declared outputs, ok flag).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .coverage import CoverageParams, ablation_sweep, coverage_pair
from .discriminator import bootstrap_auc
from .features import (
    export_features_csv,
    featurize_corpus,
    get_schema,
    load_features,
    save_features,
    check_comparable,
)
from .gbdt import GbdtParams
from .optimize import (
    GaParams,
    PriorAucObjective,
    PriorTripleObjective,
    TrialJournal,
    TrialRecord,
    assignment_to_config,
    ga_optimize,
    grid_enumerate,
    grid_search_auc,
    multi_restart_tpe,
    posthoc_evaluate,
    prior_search_space,
    tpe_optimize,
    _col_bounds_from,
)
from .prior import (
    FixedSampler,
    PriorConfig,
    UniformIntSampler,
    generate_corpus,
    load_prior_config,
    sample_column_counts,
)
from .runio import finalize_run, write_json
from .seeding import rng_from
from .tables import scan_corpus
from .analysis import (
    load_covariates_csv,
    load_performance_csv,
    proximity_performance_report,
)


def _parse_span(text: str, name: str):
    """An integer or an inclusive 'lo:hi' range."""
    if ":" in text:
        lo, hi = text.split(":", 1)
        lo, hi = int(lo), int(hi)
        if lo > hi:
            raise SystemExit(f"error: bad {name} range {text!r}")
        return UniformIntSampler(lo, hi)
    return FixedSampler(int(text))


def _downsample_pair(a, b, seed: int):
    """Equal sample sizes, enforced by down-sampling the larger set."""
    n = min(a.shape[0], b.shape[0])
    rng = rng_from(seed, 90)
    if a.shape[0] > n:
        a = a[np.sort(rng.choice(a.shape[0], size=n, replace=False))]
    if b.shape[0] > n:
        b = b[np.sort(rng.choice(b.shape[0], size=n, replace=False))]
    return a, b, n


def _write_csv(path: Path, fieldnames: list[str], rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _csv_cell(row.get(k)) for k in fieldnames})


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def cmd_featurize(args) -> int:
    out_dir = Path(args.out)
    schema = get_schema(args.schema)
    corpus = scan_corpus(
        args.corpus, delimiter=args.delimiter, header=not args.no_header, ragged=args.ragged
    )
    fm, skipped = featurize_corpus(corpus, schema, workers=args.workers)
    feat_path = out_dir / "features.feat"
    save_features(fm, feat_path)
    outputs = [feat_path]
    if args.csv:
        csv_path = out_dir / "features.csv"
        export_features_csv(fm, csv_path)
        outputs.append(csv_path)
    write_json(out_dir / "manifest.json", corpus.manifest_dicts())
    outputs.append(out_dir / "manifest.json")
    print(f"featurized {fm.n_rows} rows from {len(corpus)} tables ({len(skipped)} skipped)")
    for sid, why in skipped:
        print(f"  skipped {sid}: {why}")
    ok = finalize_run(
        out_dir,
        "featurize",
        {
            "corpus": str(args.corpus),
            "schema": schema.name,
            "delimiter": args.delimiter,
            "header": not args.no_header,
            "ragged": args.ragged,
            "workers": args.workers,
            "skipped": len(skipped),
        },
        inputs=[Path(args.corpus)],
        outputs=outputs,
    )
    return 0 if ok else 1


def cmd_generate(args) -> int:
    out_dir = Path(args.out)
    theta = load_prior_config(args.theta) if args.theta else PriorConfig()
    row_sampler = _parse_span(args.rows, "rows")
    inputs = []
    if args.col_replay:
        feats = load_features(args.col_replay)
        col_sampler = sample_column_counts(feats)
        theta_bounds = col_sampler.bounds
        inputs.append(Path(args.col_replay))
    elif args.cols:
        col_sampler = _parse_span(args.cols, "cols")
        if isinstance(col_sampler, FixedSampler):
            theta_bounds = (col_sampler.value, col_sampler.value)
        else:
            theta_bounds = (col_sampler.lo, col_sampler.hi)
    else:
        raise SystemExit("error: provide --cols or --col-replay")
    if args.theta:
        inputs.append(Path(args.theta))

    theta = PriorConfig(
        **{
            **{f: getattr(theta, f) for f in (
                "max_classes", "p_categorical", "p_ordered", "balanced", "replay_small",
                "scm_type", "tree_family", "depth_rate", "estimators_rate", "p_mlp",
            )},
            "col_bounds": theta_bounds,
        }
    )

    corpus_dir = out_dir / "corpus"
    handle = generate_corpus(
        theta,
        args.n_tables,
        col_sampler,
        row_sampler,
        master_seed=args.seed,
        replay_threshold=args.replay_threshold,
        replay_prob=args.replay_prob,
        out_dir=corpus_dir,
        workers=args.workers,
    )
    outputs = [corpus_dir / "manifest.json"] + [Path(e.path) for e in handle.entries]
    print(f"generated {len(handle)} tables in {corpus_dir}")
    ok = finalize_run(
        out_dir,
        "generate",
        {
            "theta": theta.to_text().splitlines(),
            "n_tables": args.n_tables,
            "rows": args.rows,
            "cols": args.cols,
            "col_replay": args.col_replay,
            "seed": args.seed,
            "replay_threshold": args.replay_threshold,
            "replay_prob": args.replay_prob,
            "workers": args.workers,
        },
        inputs=inputs,
        outputs=outputs,
    )
    return 0 if ok else 1


def cmd_compare(args) -> int:
    out_dir = Path(args.out)
    fa = load_features(args.a)
    fb = load_features(args.b)
    check_comparable(fa, fb)
    a, b, n = _downsample_pair(fa.values, fb.values, args.seed)

    params = GbdtParams(n_trees=args.trees)
    report = bootstrap_auc(a, b, params, n_boot=args.boot, seed=args.seed)
    cov = coverage_pair(a, b, CoverageParams(k=args.k, threshold_percentile=args.percentile))

    payload = {
        "auc_mean": report.mean_auc,
        "auc_std": report.std_auc,
        "recall": cov.recall,
        "precision": cov.precision,
        "delta": cov.delta,
        "k": cov.k,
        "n": n,
        "schema": fa.schema.name,
        "n_bootstrap": report.n_bootstrap,
    }
    report_path = out_dir / "compare.json"
    write_json(report_path, payload)
    print(json.dumps(payload, indent=2))
    ok = finalize_run(
        out_dir,
        "compare",
        {
            "a": str(args.a),
            "b": str(args.b),
            "k": args.k,
            "percentile": args.percentile,
            "trees": args.trees,
            "boot": args.boot,
            "seed": args.seed,
        },
        inputs=[Path(args.a), Path(args.b)],
        outputs=[report_path],
    )
    return 0 if ok else 1


def cmd_ablate(args) -> int:
    out_dir = Path(args.out)
    fa = load_features(args.a)
    fb = load_features(args.b)
    check_comparable(fa, fb)
    a, b, _ = _downsample_pair(fa.values, fb.values, args.seed)
    k_values = [int(v) for v in args.k_values.split(",")]
    percentiles = [float(v) for v in args.percentiles.split(",")]
    rows = ablation_sweep(a, b, k_values, percentiles)
    csv_path = out_dir / "ablation.csv"
    _write_csv(csv_path, ["k", "percentile", "recall", "precision"], rows)
    print(f"wrote {len(rows)} sweep cells to {csv_path}")
    ok = finalize_run(
        out_dir,
        "ablate",
        {
            "a": str(args.a),
            "b": str(args.b),
            "k_values": k_values,
            "percentiles": percentiles,
            "seed": args.seed,
        },
        inputs=[Path(args.a), Path(args.b)],
        outputs=[csv_path],
    )
    return 0 if ok else 1


def _journal_fieldnames(space) -> list[str]:
    return list(TrialJournal.FIXED) + [p.name for p in space.params]


def _write_best_configs(out_dir: Path, records: list[TrialRecord], bounds, top_k: int) -> list[Path]:
    paths = []
    for rank, rec in enumerate(records[:top_k], start=1):
        theta = assignment_to_config(rec.assignment, bounds)
        path = out_dir / f"best_{rank:02d}.cfg"
        path.write_text(theta.to_text(), encoding="utf-8")
        paths.append(path)
    return paths


def cmd_optimize(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    real = load_features(args.real)
    space = prior_search_space()
    bounds = _col_bounds_from(real)
    journal = TrialJournal(out_dir / "trials.csv", space)
    gbdt = GbdtParams(n_trees=args.trees)
    row_sampler = _parse_span(args.rows, "rows")
    common = dict(
        real=real,
        col_bounds=bounds,
        n_eval=args.n_eval,
        gbdt=gbdt,
        n_boot=args.boot,
        row_sampler=row_sampler,
        sample_seed=args.seed,
    )
    outputs = [out_dir / "trials.csv"]

    if args.mode == "grid":
        configs = grid_enumerate(space, args.grid_g)
        total = len(configs) if args.limit is None else min(args.limit, len(configs))
        print(f"grid G={args.grid_g}: {len(configs)} configurations" + (
            f" (limited to {total})" if args.limit else ""))
        result = grid_search_auc(
            space,
            args.grid_g,
            real,
            args.seed,
            n_eval=args.n_eval,
            gbdt=gbdt,
            n_boot=args.boot,
            row_sampler=row_sampler,
            limit=args.limit,
            workers=args.workers,
            journal=journal,
        )
        journal.close()
        ranked = result.records
        _write_csv(
            out_dir / "auc_histogram.csv",
            ["bin_lo", "bin_hi", "count"],
            result.auc_histogram(),
        )
        outputs.append(out_dir / "auc_histogram.csv")
        outputs += _write_best_configs(out_dir, ranked, bounds, args.top_k)
        if args.posthoc:
            report = posthoc_evaluate(
                [r.assignment for r in ranked[: args.top_k]],
                real,
                n=args.posthoc_n,
                repeats=args.posthoc_repeats,
                seed=args.seed,
                row_sampler=row_sampler,
            )
            write_json(out_dir / "posthoc.json", report)
            outputs.append(out_dir / "posthoc.json")
        best_value = ranked[0].value if ranked else float("nan")
        print(f"grid done: {len(ranked)} ok, {len(result.failures)} failed, best AUC {best_value}")
    elif args.mode == "tpe":
        objective = PriorAucObjective(**common)
        best, history = tpe_optimize(
            objective, space, args.trials, args.seed, journal=journal, name="auc"
        )
        journal.close()
        ranked = sorted(history, key=lambda r: (r.value, r.index))
        outputs += _write_best_configs(out_dir, ranked, bounds, args.top_k)
        print(f"tpe done: best AUC {best.value} at trial {best.index}")
    elif args.mode == "ga":
        objective = PriorAucObjective(**common)
        ga = GaParams(generations=args.generations)
        best, history = ga_optimize(objective, space, ga, args.seed, journal=journal, name="auc")
        journal.close()
        ranked = sorted(history, key=lambda r: (r.value, r.index))
        outputs += _write_best_configs(out_dir, ranked, bounds, args.top_k)
        print(f"ga done: best AUC {best.value} at trial {best.index}")
    else:  # tpe-triple
        objective = PriorTripleObjective(mode=args.triple_mode, **common)
        result = multi_restart_tpe(
            objective,
            space,
            restarts=args.restarts,
            trials_per=args.trials_per_restart,
            seed=args.seed,
            journal=journal,
        )
        journal.close()
        ranked = sorted(result.records, key=lambda r: (r.value, r.index))
        outputs += _write_best_configs(out_dir, ranked, bounds, args.top_k)
        pareto_rows = [
            {"index": r.index, "recall": r.recall, "precision": r.precision, "value": r.value}
            for r in sorted(result.pareto, key=lambda r: r.index)
        ]
        _write_csv(out_dir / "pareto.csv", ["index", "recall", "precision", "value"], pareto_rows)
        outputs.append(out_dir / "pareto.csv")
        print(
            f"tpe-triple done: {len(result.records)} trials, "
            f"{len(result.pareto)} Pareto members, best loss {result.best.value}"
        )

    ok = finalize_run(
        out_dir,
        "optimize",
        {
            "mode": args.mode,
            "real": str(args.real),
            "seed": args.seed,
            "grid_g": args.grid_g,
            "limit": args.limit,
            "trials": args.trials,
            "generations": args.generations,
            "restarts": args.restarts,
            "trials_per_restart": args.trials_per_restart,
            "n_eval": args.n_eval,
            "boot": args.boot,
            "trees": args.trees,
            "rows": args.rows,
            "top_k": args.top_k,
            "workers": args.workers,
            "triple_mode": args.triple_mode,
        },
        inputs=[Path(args.real)],
        outputs=outputs,
    )
    return 0 if ok else 1


def cmd_analyze(args) -> int:
    out_dir = Path(args.out)
    perf = load_performance_csv(args.perf, args.target_model)
    bench = {}
    for path in args.bench:
        fm = load_features(path)
        bench[fm.schema.name] = fm
    reference = {}
    for path in args.reference:
        fm = load_features(path)
        reference[fm.schema.name] = fm

    covariates = load_covariates_csv(args.covariates) if args.covariates else None
    covariate_sets = {}
    for spec in args.covariate_set or []:
        name, _, cols = spec.partition("=")
        if not cols:
            raise SystemExit(f"error: bad covariate set {spec!r} (want name=col1,col2)")
        covariate_sets[name] = tuple(cols.split(","))

    report = proximity_performance_report(
        perf, bench, reference, covariates=covariates, covariate_sets=covariate_sets, k=args.k
    )
    report_path = out_dir / "report.json"
    write_json(report_path, report)
    cells_path = out_dir / "report.csv"
    _write_csv(
        cells_path,
        ["schema", "metric", "covariates", "n", "r", "p", "direction", "degenerate"],
        report["cells"],
    )
    outputs = [report_path, cells_path]
    for schema_name, data in report["scatter"].items():
        rows = [
            {
                "dataset_id": data["dataset_ids"][i],
                "distance": data["distance"][i],
                **{m: data[m][i] for m in ("rank", "rel_auc_mean", "rel_auc_best")},
            }
            for i in range(len(data["dataset_ids"]))
        ]
        scatter_path = out_dir / f"scatter_{schema_name}.csv"
        _write_csv(
            scatter_path,
            ["dataset_id", "distance", "rank", "rel_auc_mean", "rel_auc_best"],
            rows,
        )
        outputs.append(scatter_path)
    for warning in report["join_warnings"]:
        print(f"warning: {warning}")
    print(f"wrote {len(report['cells'])} correlation cells to {cells_path}")

    inputs = [Path(args.perf)] + [Path(p) for p in args.bench + args.reference]
    if args.covariates:
        inputs.append(Path(args.covariates))
    ok = finalize_run(
        out_dir,
        "analyze",
        {
            "perf": str(args.perf),
            "target_model": args.target_model,
            "bench": list(args.bench),
            "reference": list(args.reference),
            "covariates": args.covariates,
            "covariate_sets": {k: list(v) for k, v in covariate_sets.items()},
            "k": args.k,
        },
        inputs=inputs,
        outputs=outputs,
    )
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tabaudit",
        description="Distribution auditing for tabular pre-training corpora.",
    )
    parser.add_argument("--version", action="version", version=f"tabaudit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("featurize", help="extract features from a corpus directory")
    p.add_argument("--corpus", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--delimiter", default=",")
    p.add_argument("--no-header", action="store_true")
    p.add_argument("--ragged", default="error", choices=["error", "pad"])
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--csv", action="store_true", help="also export features as CSV")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("generate", help="sample a synthetic corpus from the prior")
    p.add_argument("--out", required=True)
    p.add_argument("--n-tables", type=int, required=True)
    p.add_argument("--rows", required=True, help="row count N or range lo:hi")
    p.add_argument("--cols", help="total column count (incl. target) N or range lo:hi")
    p.add_argument("--col-replay", help="feature file whose column counts are replayed")
    p.add_argument("--theta", help="prior config file (defaults used otherwise)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--replay-threshold", type=int, default=256)
    p.add_argument("--replay-prob", type=float, default=0.25)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("compare", help="bootstrap AUC + coverage between two feature files")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--percentile", type=float, default=95.0)
    p.add_argument("--trees", type=int, default=300)
    p.add_argument("--boot", type=int, default=200)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("ablate", help="coverage sweep over k and threshold percentile")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--k-values", default="1,3,5,10")
    p.add_argument("--percentiles", default="80,90,95,99")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("optimize", help="search the prior parameter space")
    p.add_argument("--mode", required=True, choices=["grid", "tpe", "ga", "tpe-triple"])
    p.add_argument("--real", required=True, help="full-schema feature file of the real corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--grid-g", type=int, default=1)
    p.add_argument("--limit", type=int, default=None, help="evaluate only the first N grid configs")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--generations", type=int, default=100)
    p.add_argument("--restarts", type=int, default=50)
    p.add_argument("--trials-per-restart", type=int, default=20)
    p.add_argument("--n-eval", type=int, default=200)
    p.add_argument("--boot", type=int, default=200)
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--rows", default="50:300", help="generated row count N or range lo:hi")
    p.add_argument("--top-k", type=int, default=5)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--triple-mode", default="verbatim", choices=["verbatim", "complemented"])
    p.add_argument("--posthoc", action="store_true")
    p.add_argument("--posthoc-n", type=int, default=1000)
    p.add_argument("--posthoc-repeats", type=int, default=5)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("analyze", help="proximity-versus-performance correlation report")
    p.add_argument("--perf", required=True)
    p.add_argument("--target-model", required=True)
    p.add_argument("--bench", nargs="+", required=True)
    p.add_argument("--reference", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--covariates")
    p.add_argument("--covariate-set", action="append")
    p.add_argument("--k", type=int, default=5)
    p.set_defaults(func=cmd_analyze)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
