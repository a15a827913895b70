"""Histogram-based gradient-boosted decision trees with logistic loss.

Level-wise growth to a fixed depth, quantile feature binning (up to 256
bins), split gain G_L^2/(H_L+lam) + G_R^2/(H_R+lam) - G^2/(H+lam), leaf
value -lr * G/(H+lam). No stochastic subsampling, so a fit is a pure
function of (X, y, params); the seed argument exists for interface
stability only. Ties in split search resolve to the lowest (feature, bin),
so models are bit-reproducible.

Trees are stored as dense heap arrays (node i -> children 2i+1, 2i+2),
which keeps prediction a handful of vectorized gathers per level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.special import expit

REG_LAMBDA = 1.0
EPS_PROB = 1e-12


class GbdtError(ValueError):
    pass


@dataclass(frozen=True)
class GbdtParams:
    n_trees: int = 300
    max_depth: int = 6
    learning_rate: float = 0.1
    min_samples_leaf: int = 5
    feature_bins: int = 256

    def __post_init__(self) -> None:
        if min(self.n_trees, self.max_depth, self.min_samples_leaf, self.feature_bins) < 1:
            raise GbdtError("all GBDT parameters must be positive")
        if not (0.0 < self.learning_rate <= 1.0):
            raise GbdtError("learning_rate must be in (0, 1]")
        if self.feature_bins > 256:
            raise GbdtError("feature_bins is capped at 256")


GRID_MODE_PARAMS = GbdtParams(n_trees=100)


@njit(cache=True)
def _level_kernel(codes_t, g, h, row_slot, n_slots, n_bins, node_g, node_h, node_c, min_leaf, lam):
    """Per-feature histogram build fused with the split scan.

    One (slots, bins) working set at a time keeps the scattered adds in
    cache. Returns the per-(feature, slot) best candidates; the caller
    reduces over features in ascending order so ties are deterministic.
    """
    n_feat = codes_t.shape[0]
    n = g.shape[0]
    per_gain = np.zeros((n_feat, n_slots))
    per_bin = np.full((n_feat, n_slots), -1, np.int64)
    per_gl = np.zeros((n_feat, n_slots))
    per_hl = np.zeros((n_feat, n_slots))
    per_cl = np.zeros((n_feat, n_slots))

    hg = np.empty((n_slots, n_bins))
    hh = np.empty((n_slots, n_bins))
    hc = np.empty((n_slots, n_bins))
    for f in range(n_feat):
        for s in range(n_slots):
            for b in range(n_bins):
                hg[s, b] = 0.0
                hh[s, b] = 0.0
                hc[s, b] = 0.0
        col = codes_t[f]
        for i in range(n):
            s = row_slot[i]
            if s >= 0:
                b = col[i]
                hg[s, b] += g[i]
                hh[s, b] += h[i]
                hc[s, b] += 1.0
        for s in range(n_slots):
            c_tot = node_c[s]
            if c_tot < 2 * min_leaf:
                continue
            g_tot = node_g[s]
            h_tot = node_h[s]
            parent = g_tot * g_tot / (h_tot + lam)
            gl = 0.0
            hl = 0.0
            cl = 0.0
            for b in range(n_bins - 1):
                cnt = hc[s, b]
                gl += hg[s, b]
                hl += hh[s, b]
                cl += cnt
                if cnt == 0.0:
                    continue  # identical left set as the previous candidate
                if cl < min_leaf:
                    continue
                if c_tot - cl < min_leaf:
                    break  # right side only shrinks from here on
                gr = g_tot - gl
                hr = h_tot - hl
                gain = gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent
                if gain > per_gain[f, s]:
                    per_gain[f, s] = gain
                    per_bin[f, s] = b
                    per_gl[f, s] = gl
                    per_hl[f, s] = hl
                    per_cl[f, s] = cl
    return per_gain, per_bin, per_gl, per_hl, per_cl


@njit(cache=True)
def _reduce_best(per_gain, per_bin, per_gl, per_hl, per_cl):
    """First-wins argmax over features per slot (strictly greater gain)."""
    n_feat, n_slots = per_gain.shape
    best_gain = np.zeros(n_slots)
    best_feat = np.full(n_slots, -1, np.int64)
    best_bin = np.full(n_slots, -1, np.int64)
    best_gl = np.zeros(n_slots)
    best_hl = np.zeros(n_slots)
    best_cl = np.zeros(n_slots)
    for f in range(n_feat):
        for s in range(n_slots):
            if per_gain[f, s] > best_gain[s]:
                best_gain[s] = per_gain[f, s]
                best_feat[s] = f
                best_bin[s] = per_bin[f, s]
                best_gl[s] = per_gl[f, s]
                best_hl[s] = per_hl[f, s]
                best_cl[s] = per_cl[f, s]
    return best_gain, best_feat, best_bin, best_gl, best_hl, best_cl


def _bin_features(x: np.ndarray, n_bins: int) -> tuple[np.ndarray, list[np.ndarray]]:
    """Quantile-bin each feature; returns uint8 codes and per-feature edges."""
    n, n_feat = x.shape
    codes = np.zeros((n, n_feat), dtype=np.uint8)
    edges_per_feature = []
    qs = np.linspace(0.0, 1.0, n_bins + 1)[1:-1]
    for f in range(n_feat):
        col = x[:, f]
        edges = np.unique(np.quantile(col, qs)) if len(qs) else np.empty(0)
        edges = edges[(edges > col.min()) & (edges <= col.max())]
        codes[:, f] = np.searchsorted(edges, col, side="right")
        edges_per_feature.append(edges)
    return codes, edges_per_feature


@dataclass
class GbdtModel:
    params: GbdtParams
    base_score: float
    trees_feature: np.ndarray  # (n_trees, heap) int32, -1 marks a leaf
    trees_threshold: np.ndarray  # (n_trees, heap) float64, rule: x < thr -> left
    trees_value: np.ndarray  # (n_trees, heap) float64 leaf values
    feature_gain: np.ndarray  # raw split-gain totals per feature
    train_loss: tuple[float, ...] = field(default=())  # logistic loss per stage

    @property
    def n_features(self) -> int:
        return len(self.feature_gain)

    def decision_function(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        n = x.shape[0]
        score = np.full(n, self.base_score)
        rows = np.arange(n)
        for t in range(self.trees_feature.shape[0]):
            feat = self.trees_feature[t]
            thr = self.trees_threshold[t]
            node = np.zeros(n, dtype=np.int64)
            for _ in range(self.params.max_depth):
                f = feat[node]
                internal = f >= 0
                if not internal.any():
                    break
                go_left = x[rows, np.where(internal, f, 0)] < thr[node]
                child = np.where(go_left, 2 * node + 1, 2 * node + 2)
                node = np.where(internal, child, node)
            score += self.trees_value[t][node]
        return score

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return expit(self.decision_function(x))

    def feature_importance(self) -> np.ndarray:
        """Per-feature share of total split gain (sums to 1 when any split exists)."""
        total = self.feature_gain.sum()
        if total <= 0:
            return np.zeros_like(self.feature_gain)
        return self.feature_gain / total


def _log_loss(y: np.ndarray, p: np.ndarray) -> float:
    p = np.clip(p, EPS_PROB, 1.0 - EPS_PROB)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def fit_gbdt(
    x: np.ndarray, y: np.ndarray, params: GbdtParams = GbdtParams(), seed: int = 0
) -> GbdtModel:
    """Fit the boosted ensemble on binary labels (0/1)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != len(y):
        raise GbdtError(f"bad shapes: X {x.shape}, y {y.shape}")
    if x.shape[0] == 0:
        raise GbdtError("empty training set")
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos + n_neg != len(y):
        raise GbdtError("labels must be 0/1")
    if n_pos < 2 or n_neg < 2:
        raise GbdtError(f"need >= 2 samples per class, have {n_pos}/{n_neg}")

    n, n_feat = x.shape
    lam = REG_LAMBDA
    min_leaf = params.min_samples_leaf
    heap = 2 ** (params.max_depth + 1) - 1

    codes, edges = _bin_features(x, params.feature_bins)
    codes_t = np.ascontiguousarray(codes.T)
    n_bins = max(2, max((len(e) + 1 for e in edges), default=1))

    prior = min(max(n_pos / n, EPS_PROB), 1.0 - EPS_PROB)
    base = float(np.log(prior / (1.0 - prior)))
    score = np.full(n, base)

    trees_feature = np.full((params.n_trees, heap), -1, dtype=np.int32)
    trees_threshold = np.zeros((params.n_trees, heap))
    trees_value = np.zeros((params.n_trees, heap))
    feature_gain = np.zeros(n_feat)
    losses = []

    for t in range(params.n_trees):
        p = expit(score)
        g = p - y
        h = p * (1.0 - p)

        # level-wise growth; rows in finalized nodes get slot -1
        row_node = np.zeros(n, dtype=np.int64)
        row_slot = np.zeros(n, dtype=np.int64)
        active = [0]
        node_g = np.array([float(np.sum(g))])
        node_h = np.array([float(np.sum(h))])
        node_c = np.array([float(n)])

        for depth in range(params.max_depth):
            if not active:
                break
            per = _level_kernel(
                codes_t, g, h, row_slot, len(active), n_bins,
                node_g, node_h, node_c, float(min_leaf), lam,
            )
            gain, feat, bin_, gl, hl, cl = _reduce_best(*per)

            next_active: list[int] = []
            next_g: list[float] = []
            next_h: list[float] = []
            node_to_slot = np.full(heap, -1, dtype=np.int64)
            for s, node in enumerate(active):
                if feat[s] < 0:
                    trees_value[t, node] = -params.learning_rate * node_g[s] / (node_h[s] + lam)
                    continue
                f, b = int(feat[s]), int(bin_[s])
                trees_feature[t, node] = f
                trees_threshold[t, node] = edges[f][b]
                feature_gain[f] += gain[s]
                left, right = 2 * node + 1, 2 * node + 2
                node_to_slot[left] = len(next_active)
                next_active.append(left)
                next_g.append(gl[s])
                next_h.append(hl[s])
                node_to_slot[right] = len(next_active)
                next_active.append(right)
                next_g.append(node_g[s] - gl[s])
                next_h.append(node_h[s] - hl[s])

            if not next_active:
                active = []
                break

            live = row_slot >= 0
            slots = row_slot[live]
            nodes = row_node[live]
            f_of_row = trees_feature[t][nodes]
            splitting = f_of_row >= 0
            thr = trees_threshold[t][nodes]
            vals = x[np.flatnonzero(live), np.where(splitting, f_of_row, 0)]
            go_left = vals < thr
            new_nodes = np.where(
                splitting, np.where(go_left, 2 * nodes + 1, 2 * nodes + 2), nodes
            )
            row_node[live] = new_nodes
            new_slots = np.where(splitting, node_to_slot[new_nodes], -1)
            row_slot[live] = new_slots

            # counts for the next level come from the split bookkeeping
            active = next_active
            node_g = np.asarray(next_g)
            node_h = np.asarray(next_h)
            counts = np.bincount(
                row_slot[row_slot >= 0], minlength=len(active)
            ).astype(np.float64)
            node_c = counts

        # nodes still active at max depth become leaves
        if active:
            for s, node in enumerate(active):
                trees_value[t, node] = -params.learning_rate * node_g[s] / (node_h[s] + lam)

        score = score + trees_value[t][row_node]
        losses.append(_log_loss(y, expit(score)))

    return GbdtModel(
        params=params,
        base_score=base,
        trees_feature=trees_feature,
        trees_threshold=trees_threshold,
        trees_value=trees_value,
        feature_gain=feature_gain,
        train_loss=tuple(losses),
    )
