"""Synthetic table generation from a parameterized SCM prior.

A random DAG is sampled over observed, target and latent nodes; each
non-root node's value is a mechanism of its parents plus scaled Gaussian
noise. Mechanisms are either random-weight feed-forward maps or randomized
tree ensembles, chosen by the prior type. The target node is discretized
into classes; observed columns optionally become categorical via quantile
binning sized to trip the kappa < 0.2 heuristic.

Pinned generator constants (the prior's parameter interface leaves these
open; fixed here for reproducibility):
  edge probability 0.3; node count = feature count + 1 target +
  ceil(features/2) latents; feed-forward weights N(0,1)/sqrt(fan-in),
  activation uniform
  over {identity, tanh, relu, sine}; noise scale LogUniform[0.01, 1];
  tree depth = 1 + Geometric(depth_rate) capped at 8; estimators =
  1 + Geometric(estimators_rate) capped at 32 (single tree for the
  decision-tree family); gradient-boosted stages scaled by 0.1.

Generation is a pure function of (theta, n_rows, n_cols, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .seeding import rng_from
from .tables import (
    Column,
    CorpusHandle,
    ManifestEntry,
    Table,
    column_from_values,
    save_table,
    table_from_columns,
    write_manifest,
)

EDGE_PROBABILITY = 0.3
NOISE_SCALE_LOG10 = (-2.0, 0.0)
TREE_DEPTH_CAP = 8
TREE_ESTIMATORS_CAP = 32
GRADIENT_STAGE_SCALE = 0.1
CATEGORICAL_LEVELS = (2, 12)
DEFAULT_REPLAY_THRESHOLD = 256
DEFAULT_REPLAY_PROB = 0.25
ACTIVATIONS = ("identity", "tanh", "relu", "sine")


class PriorError(ValueError):
    pass


class ScmType(str, Enum):
    MLP = "mlp"
    TREE = "tree"
    MIX = "mix"


class TreeFamily(str, Enum):
    DECISION_TREE = "decision_tree"
    EXTRA_TREES = "extra_trees"
    RANDOM_FOREST = "random_forest"
    GRADIENT_BOOSTED = "gradient_boosted"


@dataclass(frozen=True)
class PriorConfig:
    """Full prior parameterization. Tree fields matter only for tree/mix
    types; p_mlp only for mix. Inactive fields are ignored, not rejected."""

    max_classes: int = 10
    p_categorical: float = 0.3
    p_ordered: float = 0.5
    balanced: bool = False
    replay_small: bool = False
    scm_type: ScmType = ScmType.MIX
    tree_family: TreeFamily = TreeFamily.GRADIENT_BOOSTED
    depth_rate: float = 0.7
    estimators_rate: float = 0.7
    p_mlp: float = 0.5
    col_bounds: tuple[int, int] = (2, 16)

    def __post_init__(self) -> None:
        if not (2 <= self.max_classes <= 20):
            raise PriorError("max_classes must be in [2, 20]")
        if not (0.0 <= self.p_categorical <= 0.6):
            raise PriorError("p_categorical must be in [0, 0.6]")
        if not (0.0 <= self.p_ordered <= 1.0):
            raise PriorError("p_ordered must be in [0, 1]")
        if self.uses_trees and not (0.3 <= self.depth_rate <= 1.0):
            raise PriorError("depth_rate must be in [0.3, 1.0]")
        if self.uses_trees and not (0.3 <= self.estimators_rate <= 1.0):
            raise PriorError("estimators_rate must be in [0.3, 1.0]")
        if self.scm_type is ScmType.MIX and not (0.0 <= self.p_mlp <= 1.0):
            raise PriorError("p_mlp must be in [0, 1]")
        if self.col_bounds[0] < 2 or self.col_bounds[0] > self.col_bounds[1]:
            raise PriorError(f"bad col_bounds {self.col_bounds}")

    @property
    def uses_trees(self) -> bool:
        return self.scm_type in (ScmType.TREE, ScmType.MIX)

    def to_text(self) -> str:
        lines = [
            f"max_classes = {self.max_classes}",
            f"p_categorical = {self.p_categorical!r}",
            f"p_ordered = {self.p_ordered!r}",
            f"balanced = {int(self.balanced)}",
            f"replay_small = {int(self.replay_small)}",
            f"scm_type = {self.scm_type.value}",
        ]
        if self.uses_trees:
            lines += [
                f"tree_family = {self.tree_family.value}",
                f"depth_rate = {self.depth_rate!r}",
                f"estimators_rate = {self.estimators_rate!r}",
            ]
        if self.scm_type is ScmType.MIX:
            lines.append(f"p_mlp = {self.p_mlp!r}")
        lines.append(f"col_bounds = {self.col_bounds[0]} {self.col_bounds[1]}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PriorConfig":
        kv: dict[str, str] = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise PriorError(f"bad config line: {line!r}")
            key, _, value = line.partition("=")
            kv[key.strip()] = value.strip()
        try:
            kwargs: dict = {
                "max_classes": int(kv["max_classes"]),
                "p_categorical": float(kv["p_categorical"]),
                "p_ordered": float(kv["p_ordered"]),
                "balanced": bool(int(kv["balanced"])),
                "replay_small": bool(int(kv["replay_small"])),
                "scm_type": ScmType(kv["scm_type"]),
            }
            if "tree_family" in kv:
                kwargs["tree_family"] = TreeFamily(kv["tree_family"])
            if "depth_rate" in kv:
                kwargs["depth_rate"] = float(kv["depth_rate"])
            if "estimators_rate" in kv:
                kwargs["estimators_rate"] = float(kv["estimators_rate"])
            if "p_mlp" in kv:
                kwargs["p_mlp"] = float(kv["p_mlp"])
            lo, hi = kv["col_bounds"].split()
            kwargs["col_bounds"] = (int(lo), int(hi))
        except KeyError as exc:
            raise PriorError(f"missing config key: {exc}") from exc
        return cls(**kwargs)


def save_prior_config(theta: PriorConfig, path: str | Path) -> None:
    Path(path).write_text(theta.to_text(), encoding="utf-8")


def load_prior_config(path: str | Path) -> PriorConfig:
    return PriorConfig.from_text(Path(path).read_text(encoding="utf-8"))


# -- mechanisms ----------------------------------------------------------------


@dataclass(frozen=True)
class FeedForward:
    weights: np.ndarray
    activation: str

    def __call__(self, parents: np.ndarray) -> np.ndarray:
        z = parents @ self.weights
        if self.activation == "identity":
            return z
        if self.activation == "tanh":
            return np.tanh(z)
        if self.activation == "relu":
            return np.maximum(z, 0.0)
        return np.sin(z)


@dataclass(frozen=True)
class TreeEnsemble:
    family: TreeFamily
    depth: int
    n_estimators: int
    seed: int

    def __call__(self, parents: np.ndarray) -> np.ndarray:
        rng = rng_from(self.seed)
        n, p = parents.shape
        lo = parents.min(axis=0)
        hi = parents.max(axis=0)
        out = np.zeros(n)
        for _ in range(self.n_estimators):
            if self.family is TreeFamily.RANDOM_FOREST:
                n_sub = max(1, int(math.ceil(math.sqrt(p))))
                feats = rng.choice(p, size=n_sub, replace=False)
            else:
                feats = np.arange(p)
            out += self._eval_tree(parents, rng, feats, lo, hi)
        if self.family is TreeFamily.GRADIENT_BOOSTED:
            return out * GRADIENT_STAGE_SCALE
        return out / self.n_estimators

    def _eval_tree(self, parents, rng, feats, lo, hi) -> np.ndarray:
        """One random tree, evaluated as vectorized heap descent.

        Extra-trees thresholds are uniform on the feature range; the other
        families split at a randomly drawn data value.
        """
        n = parents.shape[0]
        n_internal = 2**self.depth - 1
        feat = feats[rng.integers(0, len(feats), size=n_internal)]
        if self.family is TreeFamily.EXTRA_TREES:
            thr = lo[feat] + (hi[feat] - lo[feat]) * rng.random(n_internal)
        else:
            picks = rng.integers(0, n, size=n_internal)
            thr = parents[picks, feat]
        leaves = rng.standard_normal(2 ** (self.depth + 1) - 1)

        node = np.zeros(n, dtype=np.int64)
        for _ in range(self.depth):
            go_left = parents[np.arange(n), feat[node]] <= thr[node]
            node = np.where(go_left, 2 * node + 1, 2 * node + 2)
        return leaves[node]


Mechanism = FeedForward | TreeEnsemble


def sample_mechanism(theta: PriorConfig, n_parents: int, rng: np.random.Generator) -> Mechanism:
    """Draw one node mechanism per the prior type."""
    if theta.scm_type is ScmType.MLP:
        use_mlp = True
    elif theta.scm_type is ScmType.TREE:
        use_mlp = False
    else:
        use_mlp = rng.random() < theta.p_mlp

    if use_mlp:
        weights = rng.standard_normal(n_parents) / math.sqrt(n_parents)
        activation = ACTIVATIONS[int(rng.integers(0, len(ACTIVATIONS)))]
        return FeedForward(weights=weights, activation=activation)

    depth = min(1 + int(rng.geometric(theta.depth_rate)), TREE_DEPTH_CAP)
    if theta.tree_family is TreeFamily.DECISION_TREE:
        n_estimators = 1
    else:
        n_estimators = min(1 + int(rng.geometric(theta.estimators_rate)), TREE_ESTIMATORS_CAP)
    return TreeEnsemble(
        family=theta.tree_family,
        depth=depth,
        n_estimators=n_estimators,
        seed=int(rng.integers(0, 2**63 - 1)),
    )


# -- graph ---------------------------------------------------------------------


@dataclass
class ScmGraph:
    n_nodes: int
    order: tuple[int, ...]  # topological evaluation order
    parents: tuple[tuple[int, ...], ...]
    mechanisms: tuple[Mechanism | None, ...] = ()
    noise_scales: tuple[float, ...] = ()
    observed: tuple[int, ...] = ()
    target: int = -1


def sample_dag(n_nodes: int, rng: np.random.Generator) -> ScmGraph:
    """Random DAG skeleton: edges i -> j allowed only for i before j in a
    random node order, kept with probability 0.3; every non-root node gets
    at least one parent (so all nodes are reachable from the single root)."""
    if n_nodes < 2:
        raise PriorError("a DAG needs at least 2 nodes")
    order = [int(v) for v in rng.permutation(n_nodes)]
    parents: list[tuple[int, ...]] = [() for _ in range(n_nodes)]
    for pos in range(1, n_nodes):
        node = order[pos]
        mask = rng.random(pos) < EDGE_PROBABILITY
        chosen = [order[i] for i in range(pos) if mask[i]]
        if not chosen:
            chosen = [order[int(rng.integers(0, pos))]]
        parents[node] = tuple(chosen)
    return ScmGraph(n_nodes=n_nodes, order=tuple(order), parents=tuple(parents))


@dataclass(frozen=True)
class GenerationRequest:
    """``n_cols`` is the total width of the emitted table (feature columns
    plus the target), so replaying column counts observed on real tables
    reproduces their width distribution exactly."""

    theta: PriorConfig
    n_rows: int
    n_cols: int
    seed: int

    def __post_init__(self) -> None:
        lo, hi = self.theta.col_bounds
        if not (lo <= self.n_cols <= hi):
            raise PriorError(f"n_cols {self.n_cols} outside col_bounds [{lo}, {hi}]")
        if self.n_cols < 2:
            raise PriorError("n_cols must be >= 2 (one feature plus the target)")
        if self.n_rows < 2:
            raise PriorError("n_rows must be >= 2 (targets need two classes)")
        if self.theta.balanced and self.n_rows < self.theta.max_classes:
            raise PriorError("balanced targets need n_rows >= max_classes")


def _discretize_target(
    values: np.ndarray, theta: PriorConfig, rng: np.random.Generator
) -> np.ndarray:
    """Cut the scalar target into c classes.

    Ordered targets use quantile cuts; unordered ones nearest-centroid
    assignment with randomly permuted labels. Balanced mode assigns classes
    by rank blocks whose sizes differ by at most one.
    """
    n = len(values)
    c = int(rng.integers(2, theta.max_classes + 1))
    ordered = rng.random() < theta.p_ordered
    label_perm = rng.permutation(c)

    if theta.balanced:
        ranks = np.argsort(values, kind="stable")
        sizes = np.full(c, n // c)
        sizes[: n % c] += 1
        labels = np.empty(n, dtype=np.int64)
        start = 0
        for cls, size in enumerate(sizes):
            labels[ranks[start : start + size]] = cls
            start += size
        return labels if ordered else label_perm[labels]

    if ordered:
        edges = np.quantile(values, [i / c for i in range(1, c)])
        labels = np.searchsorted(edges, values, side="right").astype(np.int64)
        labels = np.minimum(labels, c - 1)
    else:
        uniq = np.unique(values)
        if len(uniq) < c:
            labels = np.searchsorted(uniq, values).astype(np.int64)
        else:
            centroids = np.sort(rng.choice(uniq, size=c, replace=False))
            labels = np.argmin(np.abs(values[:, None] - centroids[None, :]), axis=1)
            labels = label_perm[labels]
    if len(np.unique(labels)) < 2:
        # degenerate cuts (massive ties): fall back to a balanced rank split
        ranks = np.argsort(values, kind="stable")
        labels = np.empty(n, dtype=np.int64)
        half = n // 2
        labels[ranks[:half]] = 0
        labels[ranks[half:]] = 1
    return labels


def _bin_categorical(values: np.ndarray, n_rows: int, rng: np.random.Generator) -> np.ndarray:
    """Quantile-bin a numeric column into few enough levels that the
    kappa < 0.2 heuristic marks it categorical at this row count."""
    levels = int(rng.integers(CATEGORICAL_LEVELS[0], CATEGORICAL_LEVELS[1] + 1))
    kappa_cap = int(math.ceil(0.2 * n_rows)) - 1
    levels = max(2, min(levels, kappa_cap)) if kappa_cap >= 2 else 2
    edges = np.quantile(values, [i / levels for i in range(1, levels)])
    codes = np.searchsorted(edges, values, side="right").astype(np.float64)
    return np.minimum(codes, levels - 1)


def generate_table(req: GenerationRequest) -> Table:
    """Sample one table from the prior: SCM evaluation in topological order,
    target discretization, optional categorical realization of columns."""
    theta = req.theta
    rng = rng_from(req.seed)
    n_features, n_rows = req.n_cols - 1, req.n_rows

    n_latent = math.ceil(n_features / 2)
    n_nodes = n_features + 1 + n_latent
    graph = sample_dag(n_nodes, rng)

    roles = rng.permutation(n_nodes)
    observed = [int(v) for v in roles[:n_features]]
    target_node = int(roles[n_features])

    mechanisms: list[Mechanism | None] = [None] * n_nodes
    noise_scales = [0.0] * n_nodes
    for node in graph.order:
        lo, hi = NOISE_SCALE_LOG10
        noise_scales[node] = float(10 ** rng.uniform(lo, hi))
        if graph.parents[node]:
            mechanisms[node] = sample_mechanism(theta, len(graph.parents[node]), rng)

    values = np.zeros((n_rows, n_nodes))
    for node in graph.order:
        noise = noise_scales[node] * rng.standard_normal(n_rows)
        mech = mechanisms[node]
        if mech is None:
            values[:, node] = noise
        else:
            values[:, node] = mech(values[:, list(graph.parents[node])]) + noise

    columns: list[Column] = []
    for j, node in enumerate(observed):
        col_values = values[:, node]
        if rng.random() < theta.p_categorical:
            col_values = _bin_categorical(col_values, n_rows, rng)
        columns.append(column_from_values(f"c{j}", col_values))
    target = _discretize_target(values[:, target_node], theta, rng)
    columns.append(column_from_values("target", target.astype(np.float64)))

    return table_from_columns(f"synth-{req.seed}", columns)


# -- corpus-level sampling -----------------------------------------------------


class ColumnCountSampler:
    """Empirical sampler over observed column counts, clipped to bounds."""

    def __init__(self, counts: Sequence[int], bounds: tuple[int, int] | None = None):
        counts = [int(c) for c in counts]
        if bounds is not None:
            counts = [c for c in counts if bounds[0] <= c <= bounds[1]]
        if not counts:
            raise PriorError("no column counts available within bounds")
        self.counts = np.asarray(counts, dtype=np.int64)

    def __call__(self, rng: np.random.Generator) -> int:
        return int(self.counts[int(rng.integers(0, len(self.counts)))])

    @property
    def bounds(self) -> tuple[int, int]:
        return int(self.counts.min()), int(self.counts.max())


def sample_column_counts(real_features) -> ColumnCountSampler:
    """Sampler over the column-count distribution of a full-schema feature
    matrix (coordinate 0 carries the column count)."""
    if real_features.schema.name != "full":
        raise PriorError("column-count replay needs full-schema features")
    if real_features.n_rows == 0:
        raise PriorError("empty feature matrix")
    return ColumnCountSampler(real_features.values[:, 0].astype(int))


@dataclass(frozen=True)
class FixedSampler:
    value: int

    def __call__(self, rng: np.random.Generator) -> int:
        return self.value


@dataclass(frozen=True)
class UniformIntSampler:
    lo: int
    hi: int

    def __call__(self, rng: np.random.Generator) -> int:
        return int(rng.integers(self.lo, self.hi + 1))


def generate_corpus(
    theta: PriorConfig,
    n_tables: int,
    col_sampler: Callable[[np.random.Generator], int],
    row_sampler: Callable[[np.random.Generator], int],
    master_seed: int,
    *,
    replay_threshold: int = DEFAULT_REPLAY_THRESHOLD,
    replay_prob: float = DEFAULT_REPLAY_PROB,
    out_dir: str | Path | None = None,
    workers: int = 1,
) -> CorpusHandle:
    """Generate ``n_tables`` independent tables with per-index seeds.

    With replay_small, tables below ``replay_threshold`` rows enter a cache
    and each later slot, with probability ``replay_prob``, re-emits a
    row-resample (with replacement) of a cached table instead of a fresh
    draw. Replay slots are decided up front from per-index streams, so the
    corpus is identical for any worker count.
    """
    plans = []  # (index, kind, n_rows, n_cols/source_index, table_seed)
    small_cache: list[int] = []  # indices of cached fresh small tables
    meta = []
    for i in range(n_tables):
        rng = rng_from(master_seed, i, 0)
        replay_u = rng.random()
        n_rows = int(row_sampler(rng))
        n_cols = int(col_sampler(rng))
        table_seed = int(rng.integers(0, 2**63 - 1))
        if theta.replay_small and small_cache and replay_u < replay_prob:
            source = small_cache[int(rng.integers(0, len(small_cache)))]
            meta.append(("replay", source))
        else:
            meta.append(("fresh", (n_rows, n_cols, table_seed)))
            if n_rows < replay_threshold:
                small_cache.append(i)

    fresh_requests = {
        i: GenerationRequest(theta=theta, n_rows=spec[0], n_cols=spec[1], seed=spec[2])
        for i, (kind, spec) in enumerate(meta)
        if kind == "fresh"
    }

    if workers > 1 and len(fresh_requests) > 1:
        from concurrent.futures import ProcessPoolExecutor

        items = sorted(fresh_requests.items())
        with ProcessPoolExecutor(max_workers=workers) as pool:
            generated = list(pool.map(generate_table, [req for _, req in items], chunksize=8))
        fresh_tables = {i: t for (i, _), t in zip(items, generated)}
    else:
        fresh_tables = {i: generate_table(req) for i, req in sorted(fresh_requests.items())}

    tables: list[Table] = []
    for i, (kind, spec) in enumerate(meta):
        if kind == "fresh":
            src = fresh_tables[i]
            table = table_from_columns(f"synth-{i:05d}", src.columns)
        else:
            src = tables[spec]
            rows = rng_from(master_seed, i, 2).integers(0, src.n_rows, size=src.n_rows)
            cols = [
                column_from_values(c.name, c.values[rows], c.tokens) for c in src.columns
            ]
            table = table_from_columns(f"synth-{i:05d}", cols)
        tables.append(table)

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        entries = []
        for t in tables:
            fname = f"{t.source_id}.csv"
            save_table(t, out_dir / fname)
            entries.append(
                ManifestEntry(t.source_id, str(out_dir / fname), t.n_rows, t.n_cols)
            )
        handle = CorpusHandle(entries=tuple(entries))
        write_manifest(handle, out_dir / "manifest.json")
        return handle

    entries = tuple(ManifestEntry(t.source_id, None, t.n_rows, t.n_cols) for t in tables)
    return CorpusHandle(entries=entries, memory_tables={t.source_id: t for t in tables})
