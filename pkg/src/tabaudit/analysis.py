"""Proximity-versus-performance analysis.

Joins a benchmark performance table (one row per dataset, one column per
model) with k-NN proximity scores of the benchmark datasets to a reference
corpus, and reports Pearson and partial correlations (with two-sided
t-test p-values) between proximity and three performance summaries:
rank of the target model, its AUC relative to the competitor mean, and
relative to the competitor best.

Direction tags follow the sign of d(performance)/d(distance): "down" means
performance falls as distance from the reference grows (rank metric sign
is flipped since lower rank is better).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .coverage import joint_normalize, _mean_knn
from .features import FeatureMatrix, check_comparable
from scipy.spatial.distance import cdist


class AnalysisError(ValueError):
    pass


class DegenerateInputError(AnalysisError):
    pass


# -- performance table ---------------------------------------------------------


@dataclass(frozen=True)
class PerformanceTable:
    dataset_ids: tuple[str, ...]
    models: tuple[str, ...]
    values: np.ndarray  # (n_datasets, n_models)
    target_model: str

    def __post_init__(self) -> None:
        if self.target_model not in self.models:
            raise AnalysisError(f"target model {self.target_model!r} not in table")
        if len(self.models) < 2:
            raise AnalysisError("need at least 2 models")
        if np.any(self.values < 0) or np.any(self.values > 1):
            raise AnalysisError("metric values must lie in [0, 1]")

    def row(self, dataset_id: str) -> dict[str, float]:
        i = self.dataset_ids.index(dataset_id)
        return dict(zip(self.models, self.values[i]))


def load_performance_csv(path: str | Path, target_model: str) -> PerformanceTable:
    """First column: dataset id; remaining columns: one per model."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        models = tuple(header[1:])
        ids, rows = [], []
        for row in reader:
            if not row:
                continue
            ids.append(row[0])
            rows.append([float(v) for v in row[1:]])
    return PerformanceTable(
        dataset_ids=tuple(ids),
        models=models,
        values=np.asarray(rows, dtype=np.float64),
        target_model=target_model,
    )


def model_rank(row: dict[str, float], target: str) -> float:
    """Rank of the target by descending metric; ties get the average rank."""
    if target not in row:
        raise AnalysisError(f"{target!r} missing from row")
    v = row[target]
    greater = sum(1 for m, x in row.items() if x > v)
    equal = sum(1 for m, x in row.items() if x == v)
    return greater + (equal + 1) / 2.0


def relative_auc_mean(row: dict[str, float], target: str, *, include_target: bool = False) -> float:
    """Target metric over the mean of benchmark metrics (competitors only
    by default)."""
    if target not in row:
        raise AnalysisError(f"{target!r} missing from row")
    others = [x for m, x in row.items() if include_target or m != target]
    denom = float(np.mean(others))
    if denom == 0:
        raise AnalysisError("zero denominator in relative metric")
    return row[target] / denom


def relative_auc_best(row: dict[str, float], target: str, *, include_target: bool = False) -> float:
    """Target metric over the best benchmark metric."""
    if target not in row:
        raise AnalysisError(f"{target!r} missing from row")
    others = [x for m, x in row.items() if include_target or m != target]
    denom = float(np.max(others))
    if denom == 0:
        raise AnalysisError("zero denominator in relative metric")
    return row[target] / denom


# -- proximity -----------------------------------------------------------------


@dataclass(frozen=True)
class ProximityScores:
    schema_name: str
    dataset_ids: tuple[str, ...]
    distances: np.ndarray
    k: int


def _origin_dataset(origin: str) -> str:
    # per-column feature rows carry origins like "<dataset>#c<j>"
    return origin.partition("#")[0]


def proximity_scores(
    bench: FeatureMatrix, reference: FeatureMatrix, k: int = 5
) -> ProximityScores:
    """Mean k-NN distance of each benchmark dataset to the reference corpus
    after joint min-max normalization (cross-set: no self exclusion).
    Per-column schemas average over a dataset's column rows."""
    check_comparable(bench, reference)
    if reference.n_rows < k:
        raise AnalysisError(f"reference needs >= k={k} rows")
    a, b = joint_normalize(bench.values, reference.values)
    dists = _mean_knn(cdist(a, b), k, exclude_diagonal=False)

    ids: list[str] = []
    sums: dict[str, list[float]] = {}
    for origin, d in zip(bench.origins, dists):
        ds = _origin_dataset(origin)
        if ds not in sums:
            sums[ds] = []
            ids.append(ds)
        sums[ds].append(float(d))
    agg = np.asarray([float(np.mean(sums[ds])) for ds in ids])
    return ProximityScores(
        schema_name=bench.schema.name, dataset_ids=tuple(ids), distances=agg, k=k
    )


# -- correlations ----------------------------------------------------------------


@dataclass(frozen=True)
class CorrelationReport:
    r: float
    p: float
    n: int
    covariates: tuple[str, ...] = ()
    degenerate: bool = False
    direction: str | None = None

    def to_json_dict(self) -> dict:
        return {
            "r": self.r,
            "p": self.p,
            "n": self.n,
            "covariates": list(self.covariates),
            "degenerate": self.degenerate,
            "direction": self.direction,
        }


def _t_two_sided_p(r: float, df: int) -> float:
    if df <= 0:
        return 1.0
    if abs(r) >= 1.0:
        return 0.0
    t = abs(r) * math.sqrt(df / (1.0 - r * r))
    return float(2.0 * stats.t.sf(t, df))


def pearson(x: np.ndarray, y: np.ndarray) -> CorrelationReport:
    """Pearson r with two-sided p from t = r sqrt((n-2)/(1-r^2)), df n-2."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) != len(y) or len(x) < 3:
        raise AnalysisError("need equal-length vectors with n >= 3")
    if np.std(x) == 0 or np.std(y) == 0:
        raise DegenerateInputError("constant input to correlation")
    dx, dy = x - x.mean(), y - y.mean()
    r = float(np.sum(dx * dy) / math.sqrt(np.sum(dx**2) * np.sum(dy**2)))
    r = max(-1.0, min(1.0, r))
    return CorrelationReport(r=r, p=_t_two_sided_p(r, len(x) - 2), n=len(x))


RESIDUAL_EPS = 1e-10


def partial_correlation(
    x: np.ndarray, y: np.ndarray, z: np.ndarray | None, covariate_names: tuple[str, ...] = ()
) -> CorrelationReport:
    """Correlation of x and y after removing the least-squares contribution
    of covariates Z from each; df = n - 2 - |Z|.

    With empty Z this reduces to plain ``pearson``. Residuals explained to
    within machine noise report r = 0 with the degenerate flag.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if z is None or (hasattr(z, "size") and z.size == 0):
        return pearson(x, y)
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 1:
        z = z[:, None]
    if len(x) != len(y) or len(x) != z.shape[0]:
        raise AnalysisError("covariate rows must match x/y")
    n, k = z.shape
    design = np.column_stack([np.ones(n), z])
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise AnalysisError("covariate matrix is rank deficient")

    beta_x, *_ = np.linalg.lstsq(design, x, rcond=None)
    beta_y, *_ = np.linalg.lstsq(design, y, rcond=None)
    rx = x - design @ beta_x
    ry = y - design @ beta_y

    scale_x = max(float(np.std(x)), 1.0)
    scale_y = max(float(np.std(y)), 1.0)
    if np.std(rx) <= RESIDUAL_EPS * scale_x or np.std(ry) <= RESIDUAL_EPS * scale_y:
        return CorrelationReport(r=0.0, p=1.0, n=n, covariates=covariate_names, degenerate=True)

    dx, dy = rx - rx.mean(), ry - ry.mean()
    r = float(np.sum(dx * dy) / math.sqrt(np.sum(dx**2) * np.sum(dy**2)))
    r = max(-1.0, min(1.0, r))
    return CorrelationReport(
        r=r, p=_t_two_sided_p(r, n - 2 - k), n=n, covariates=covariate_names
    )


def detectable_r(n: int, power: float = 0.8, alpha: float = 0.05) -> float:
    """Smallest |r| detectable at the given power and two-sided alpha via
    the Fisher z approximation: tanh((z_{1-a/2} + z_power) / sqrt(n-3))."""
    if n < 4:
        raise AnalysisError("need n >= 4")
    if not (0 < power < 1) or not (0 < alpha < 1):
        raise AnalysisError("power and alpha must lie in (0, 1)")
    z = stats.norm.ppf(1.0 - alpha / 2.0) + stats.norm.ppf(power)
    return float(np.tanh(z / math.sqrt(n - 3)))


def class_balance(labels: np.ndarray) -> float:
    """Minority-to-majority count ratio of a label column."""
    labels = np.asarray(labels)
    labels = labels[~(labels != labels)] if labels.dtype.kind == "f" else labels
    _, counts = np.unique(labels, return_counts=True)
    if len(counts) < 2:
        return 1.0
    return float(counts.min() / counts.max())


# -- covariates ------------------------------------------------------------------


@dataclass(frozen=True)
class CovariateTable:
    dataset_ids: tuple[str, ...]
    names: tuple[str, ...]
    values: np.ndarray

    def subset(self, ids: list[str], names: tuple[str, ...]) -> np.ndarray:
        col_idx = [self.names.index(n) for n in names]
        row_of = {d: i for i, d in enumerate(self.dataset_ids)}
        rows = [row_of[d] for d in ids]
        return self.values[np.ix_(rows, col_idx)]

    def has_all(self, ids: list[str], names: tuple[str, ...]) -> bool:
        return all(n in self.names for n in names) and all(d in self.dataset_ids for d in ids)


def load_covariates_csv(path: str | Path) -> CovariateTable:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        names = tuple(header[1:])
        ids, rows = [], []
        for row in reader:
            if not row:
                continue
            ids.append(row[0])
            rows.append([float(v) for v in row[1:]])
    return CovariateTable(tuple(ids), names, np.asarray(rows, dtype=np.float64))


# -- full report -----------------------------------------------------------------

METRICS = ("rank", "rel_auc_mean", "rel_auc_best")
HIGHER_IS_BETTER = {"rank": False, "rel_auc_mean": True, "rel_auc_best": True}
MIN_JOIN_FRACTION = 0.8


def direction_tag(r: float, metric: str) -> str:
    """"up" when performance rises with distance from the reference,
    "down" when it falls; the rank metric's sign is inverted."""
    slope = r if HIGHER_IS_BETTER[metric] else -r
    return "up" if slope >= 0 else "down"


def performance_metrics(perf: PerformanceTable, ids: list[str]) -> dict[str, np.ndarray]:
    rows = [perf.row(d) for d in ids]
    t = perf.target_model
    return {
        "rank": np.asarray([model_rank(r, t) for r in rows]),
        "rel_auc_mean": np.asarray([relative_auc_mean(r, t) for r in rows]),
        "rel_auc_best": np.asarray([relative_auc_best(r, t) for r in rows]),
    }


@dataclass
class ReportCell:
    schema: str
    metric: str
    covariate_set: str
    report: CorrelationReport | None
    degenerate_metric: bool = False

    def to_row(self) -> dict:
        base = {"schema": self.schema, "metric": self.metric, "covariates": self.covariate_set}
        if self.degenerate_metric or self.report is None:
            base.update({"n": "", "r": "", "p": "", "direction": "", "degenerate": 1})
        else:
            base.update(
                {
                    "n": self.report.n,
                    "r": self.report.r,
                    "p": self.report.p,
                    "direction": self.report.direction,
                    "degenerate": int(self.report.degenerate),
                }
            )
        return base


def proximity_performance_report(
    perf: PerformanceTable,
    bench_features: dict[str, FeatureMatrix],
    reference_features: dict[str, FeatureMatrix],
    covariates: CovariateTable | None = None,
    covariate_sets: dict[str, tuple[str, ...]] | None = None,
    k: int = 5,
) -> dict:
    """Correlation cells for every (schema, metric, covariate set).

    Joins on dataset ids; fails when under 80% of benchmark feature
    datasets match the performance table. Scatter data (distance versus
    each metric) is included for plotting.
    """
    covariate_sets = covariate_sets or {}
    cells: list[ReportCell] = []
    scatter: dict[str, dict] = {}
    join_warnings: list[str] = []

    for schema_name in sorted(bench_features):
        bench = bench_features[schema_name]
        if schema_name not in reference_features:
            raise AnalysisError(f"no reference features for schema {schema_name}")
        prox = proximity_scores(bench, reference_features[schema_name], k=k)

        perf_ids = set(perf.dataset_ids)
        ids = [d for d in prox.dataset_ids if d in perf_ids]
        missing = [d for d in prox.dataset_ids if d not in perf_ids]
        if len(ids) < MIN_JOIN_FRACTION * len(prox.dataset_ids):
            raise AnalysisError(
                f"{schema_name}: only {len(ids)}/{len(prox.dataset_ids)} datasets "
                f"join the performance table"
            )
        if missing:
            join_warnings.append(f"{schema_name}: unmatched {sorted(missing)[:10]}")

        dist_of = dict(zip(prox.dataset_ids, prox.distances))
        x = np.asarray([dist_of[d] for d in ids])
        metrics = performance_metrics(perf, ids)

        scatter[schema_name] = {"dataset_ids": ids, "distance": x.tolist()}
        for metric, y in metrics.items():
            scatter[schema_name][metric] = y.tolist()
            if np.std(y) == 0 or np.std(x) == 0:
                cells.append(ReportCell(schema_name, metric, "none", None, degenerate_metric=True))
                for set_name in covariate_sets:
                    cells.append(
                        ReportCell(schema_name, metric, set_name, None, degenerate_metric=True)
                    )
                continue

            rep = pearson(x, y)
            rep = CorrelationReport(
                r=rep.r, p=rep.p, n=rep.n, direction=direction_tag(rep.r, metric)
            )
            cells.append(ReportCell(schema_name, metric, "none", rep))

            for set_name, names in covariate_sets.items():
                if covariates is None or not covariates.has_all(ids, names):
                    cells.append(ReportCell(schema_name, metric, set_name, None, True))
                    continue
                z = covariates.subset(ids, names)
                prep = partial_correlation(x, y, z, covariate_names=names)
                prep = CorrelationReport(
                    r=prep.r,
                    p=prep.p,
                    n=prep.n,
                    covariates=prep.covariates,
                    degenerate=prep.degenerate,
                    direction=direction_tag(prep.r, metric),
                )
                cells.append(ReportCell(schema_name, metric, set_name, prep))

    return {
        "target_model": perf.target_model,
        "k": k,
        "relative_auc_denominator": "mean-of-competitors",
        "cells": [c.to_row() for c in cells],
        "scatter": scatter,
        "join_warnings": join_warnings,
    }
