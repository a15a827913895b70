"""k-NN distributional overlap between two feature populations.

The coveredness threshold delta is the 95th percentile (configurable) of
mean within-covering-set k-NN distances at k = 5; a point is covered when
its mean distance to its k nearest neighbours in the covering set does not
exceed delta. Recall is the fraction of A covered by B; Precision the
fraction of B covered by A. Everything here is deterministic.

Within-set k-NN always excludes the query point. Cross-set k-NN never
does, with one exception: when A and B are value-identical matrices the
index-paired row is excluded, so a self-comparison degenerates to the
within-set statistic and recall/precision land at the threshold percentile
by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .features import FeatureMatrix, check_comparable


class CoverageError(ValueError):
    pass


@dataclass(frozen=True)
class CoverageParams:
    k: int = 5
    threshold_percentile: float = 95.0
    normalize: str = "joint-minmax"  # or "none"

    def __post_init__(self) -> None:
        if self.k < 1:
            raise CoverageError("k must be >= 1")
        if not (0.0 < self.threshold_percentile <= 100.0):
            raise CoverageError("threshold percentile must be in (0, 100]")
        if self.normalize not in ("joint-minmax", "none"):
            raise CoverageError(f"unknown normalization {self.normalize!r}")


@dataclass(frozen=True)
class CoverageReport:
    recall: float
    precision: float
    delta: float  # threshold within B, the covering set for recall
    k: int
    uncovered_fraction: float
    dist_a_to_b: np.ndarray
    dist_b_to_a: np.ndarray

    def to_json_dict(self) -> dict:
        return {
            "recall": self.recall,
            "precision": self.precision,
            "delta": self.delta,
            "k": self.k,
            "uncovered_fraction": self.uncovered_fraction,
            "per_point_distances": {
                "a_to_b": [float(v) for v in self.dist_a_to_b],
                "b_to_a": [float(v) for v in self.dist_b_to_a],
            },
        }


def _as_arrays(a, b) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(a, FeatureMatrix) and isinstance(b, FeatureMatrix):
        check_comparable(a, b)
        a, b = a.values, b.values
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise CoverageError(f"incompatible shapes {a.shape} and {b.shape}")
    return a, b


def joint_normalize(a, b) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension min-max over the union of A and B onto [0, 1].

    Dimensions constant across the union map to 0 everywhere.
    """
    a, b = _as_arrays(a, b)
    lo = np.minimum(a.min(axis=0), b.min(axis=0))
    hi = np.maximum(a.max(axis=0), b.max(axis=0))
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    a2 = np.where(span > 0, (a - lo) / safe, 0.0)
    b2 = np.where(span > 0, (b - lo) / safe, 0.0)
    return a2, b2


def knn_mean_dist(p, q, k: int, *, exclude_index: int | None = None) -> float:
    """Mean Euclidean distance from point p to its k nearest rows of Q.

    ``exclude_index`` drops one row of Q (the query itself for within-set
    queries). Boundary ties do not affect the mean of the k smallest.
    """
    q = np.asarray(q, dtype=np.float64)
    d = np.sqrt(((q - np.asarray(p, dtype=np.float64)) ** 2).sum(axis=1))
    if exclude_index is not None:
        d = np.delete(d, exclude_index)
    if len(d) < k:
        raise CoverageError(f"need at least {k} neighbours, have {len(d)}")
    return float(np.sort(np.partition(d, k - 1)[:k]).sum() / k)


def _mean_knn(dists: np.ndarray, k: int, exclude_diagonal: bool) -> np.ndarray:
    """Row-wise mean of the k smallest entries of a distance matrix."""
    d = dists
    if exclude_diagonal:
        d = d.copy()
        np.fill_diagonal(d, np.inf)
    if d.shape[1] - (1 if exclude_diagonal else 0) < k:
        raise CoverageError(f"need at least {k} neighbours, have {d.shape[1]}")
    part = np.partition(d, k - 1, axis=1)[:, :k]
    return np.sort(part, axis=1).sum(axis=1) / k


def _within_dists(q: np.ndarray, k: int) -> np.ndarray:
    return _mean_knn(cdist(q, q), k, exclude_diagonal=True)


def coverage_threshold(q, params: CoverageParams = CoverageParams()) -> float:
    """Percentile (linear interpolation, inclusive) of within-set mean k-NN
    distances; the coveredness threshold delta."""
    q = np.asarray(q if not isinstance(q, FeatureMatrix) else q.values, dtype=np.float64)
    if q.shape[0] < params.k + 1:
        raise CoverageError(f"need at least k+1={params.k + 1} rows, have {q.shape[0]}")
    w = _within_dists(q, params.k)
    return float(np.percentile(w, params.threshold_percentile, method="linear"))


def coverage_pair(a, b, params: CoverageParams = CoverageParams()) -> CoverageReport:
    """Two-directional coverage of feature sets A and B.

    recall    = fraction of A within delta_B of B (delta from within B)
    precision = fraction of B within delta_A of A (delta from within A)
    """
    a, b = _as_arrays(a, b)
    if params.normalize == "joint-minmax":
        a, b = joint_normalize(a, b)
    k = params.k
    if a.shape[0] < k + 1 or b.shape[0] < k + 1:
        raise CoverageError(f"both sets need at least k+1={k + 1} rows")

    identical = a.shape == b.shape and np.array_equal(a, b)

    within_b = _mean_knn(cdist(b, b), k, exclude_diagonal=True)
    within_a = _mean_knn(cdist(a, a), k, exclude_diagonal=True)
    delta_b = float(np.percentile(within_b, params.threshold_percentile, method="linear"))
    delta_a = float(np.percentile(within_a, params.threshold_percentile, method="linear"))

    if identical:
        # a self-comparison: pair rows by index so the zero distances of a
        # point to itself do not count as cross-set neighbours
        cross_ab, cross_ba = within_b, within_a
    else:
        d_ab = cdist(a, b)
        cross_ab = _mean_knn(d_ab, k, exclude_diagonal=False)
        cross_ba = _mean_knn(d_ab.T, k, exclude_diagonal=False)

    recall = float(np.mean(cross_ab <= delta_b))
    precision = float(np.mean(cross_ba <= delta_a))
    return CoverageReport(
        recall=recall,
        precision=precision,
        delta=delta_b,
        k=k,
        uncovered_fraction=1.0 - recall,
        dist_a_to_b=cross_ab,
        dist_b_to_a=cross_ba,
    )


def ablation_sweep(
    a,
    b,
    k_values: list[int],
    percentiles: list[float],
    *,
    normalize: str = "joint-minmax",
) -> list[dict]:
    """Grid of coverage reports over k and threshold percentile.

    Emits one row per (k, percentile): heatmap-ready long format.
    """
    a, b = _as_arrays(a, b)
    if normalize == "joint-minmax":
        a, b = joint_normalize(a, b)
    if max(k_values) + 1 > min(a.shape[0], b.shape[0]):
        raise CoverageError("max k exceeds available rows")

    identical = a.shape == b.shape and np.array_equal(a, b)
    d_aa, d_bb = cdist(a, a), cdist(b, b)
    d_ab = None if identical else cdist(a, b)

    rows = []
    for k in k_values:
        within_b = _mean_knn(d_bb, k, exclude_diagonal=True)
        within_a = _mean_knn(d_aa, k, exclude_diagonal=True)
        if identical:
            cross_ab, cross_ba = within_b, within_a
        else:
            cross_ab = _mean_knn(d_ab, k, exclude_diagonal=False)
            cross_ba = _mean_knn(d_ab.T, k, exclude_diagonal=False)
        for pct in percentiles:
            delta_b = float(np.percentile(within_b, pct, method="linear"))
            delta_a = float(np.percentile(within_a, pct, method="linear"))
            rows.append(
                {
                    "k": k,
                    "percentile": pct,
                    "recall": float(np.mean(cross_ab <= delta_b)),
                    "precision": float(np.mean(cross_ba <= delta_a)),
                }
            )
    return rows
