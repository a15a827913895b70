"""Distinguishability scoring between two feature populations.

A boosted-tree classifier (see gbdt) separates population A (label 1,
"real") from population B (label 0, "synthetic"); held-out ROC AUC over
repeated stratified 80/20 splits measures how distinguishable the
populations are. AUC 0.5 means indistinguishable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gbdt import GbdtModel, GbdtParams, fit_gbdt
from .seeding import rng_from

TRAIN_FRACTION = 0.8
MIN_CLASS_SIZE = 20


class DiscriminatorError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledFeatureSet:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        if self.x.shape[0] != len(self.y):
            raise DiscriminatorError("X and y row counts differ")
        if not (np.any(self.y == 1) and np.any(self.y == 0)):
            raise DiscriminatorError("both classes must be present")


@dataclass(frozen=True)
class AucReport:
    mean_auc: float
    std_auc: float
    n_bootstrap: int
    per_rep_auc: tuple[float, ...]

    def to_json_dict(self) -> dict:
        return {
            "mean_auc": self.mean_auc,
            "std_auc": self.std_auc,
            "n_bootstrap": self.n_bootstrap,
            "per_rep_auc": list(self.per_rep_auc),
        }


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mann-Whitney AUC: fraction of (positive, negative) pairs ranked
    correctly, ties counted 1/2. Computed from tie-averaged ranks, which is
    exactly the pairwise count."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise DiscriminatorError("AUC needs both classes")

    order = np.argsort(scores, kind="stable")
    s = scores[order]
    ranks = np.empty(len(s), dtype=np.float64)
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and s[j + 1] == s[i]:
            j += 1
        ranks[i : j + 1] = (i + j) / 2.0 + 1.0  # average of 1-based ranks i+1..j+1
        i = j + 1
    rank_of = np.empty(len(s), dtype=np.float64)
    rank_of[order] = ranks
    pos_rank_sum = float(rank_of[labels == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def stratified_split(
    y: np.ndarray, rng: np.random.Generator, train_fraction: float = TRAIN_FRACTION
) -> tuple[np.ndarray, np.ndarray]:
    """Class-wise shuffle-split preserving the class ratio to within one
    sample per class. Returns (train_idx, test_idx) in sorted order."""
    train, test = [], []
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        perm = rng.permutation(len(idx))
        n_train = int(round(train_fraction * len(idx)))
        n_train = min(max(n_train, 1), len(idx) - 1)
        train.append(idx[perm[:n_train]])
        test.append(idx[perm[n_train:]])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def bootstrap_auc(
    a: np.ndarray,
    b: np.ndarray,
    params: GbdtParams = GbdtParams(),
    n_boot: int = 200,
    seed: int = 0,
) -> AucReport:
    """Held-out AUC over ``n_boot`` independent stratified 80/20 splits.

    Per-repetition seeds derive from (seed, rep), so repetitions are
    schedule-independent and the report is reproducible bit for bit.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[0] < MIN_CLASS_SIZE or b.shape[0] < MIN_CLASS_SIZE:
        raise DiscriminatorError(f"each population needs >= {MIN_CLASS_SIZE} rows")
    if a.shape[1] != b.shape[1]:
        raise DiscriminatorError("feature dimensions differ")

    x = np.concatenate([a, b], axis=0)
    y = np.concatenate([np.ones(a.shape[0]), np.zeros(b.shape[0])])

    per_rep = []
    for rep in range(n_boot):
        rng = rng_from(seed, rep)
        train_idx, test_idx = stratified_split(y, rng)
        model = fit_gbdt(x[train_idx], y[train_idx], params)
        scores = model.decision_function(x[test_idx])
        per_rep.append(auc(scores, y[test_idx]))

    arr = np.asarray(per_rep)
    return AucReport(
        mean_auc=float(arr.mean()),
        std_auc=float(arr.std()),
        n_bootstrap=n_boot,
        per_rep_auc=tuple(float(v) for v in per_rep),
    )


def feature_importance(model: GbdtModel) -> np.ndarray:
    """Per-feature share of total split-gain, normalized to sum 1."""
    return model.feature_importance()
