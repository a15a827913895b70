"""Fixed-dimension distributional features over tables.

Five schemas:

  full       (70) : [column count] + 9 scalar summaries + 60 histogram stats
  scalars    ( 9) : distributional scalar summaries, excluding column count
  scalars10  (10) : same plus the per-table std of column skewness
  histograms (60) : bin-wise mean and std of per-column cumulative histograms
  col-hists  (50) : one cumulative histogram per numeric column
  corr-hists (50) : histogram of absolute pairwise Pearson correlations

Every feature is invariant (bit for bit) under row and column permutation
of the input table: all multiset aggregates sort their inputs before
summing so float accumulation order is canonical.

Degenerate inputs never yield NaN/inf; the affected summaries are zero.
"""

from __future__ import annotations

import json
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .tables import Column, ColumnKind, CorpusHandle, Table, load_table

FEATURE_FILE_MAGIC = b"TABFEAT1"
FEATURE_FILE_VERSION = "1"
HIGH_CORRELATION = 0.7
MIN_CORRELATION_ROWS = 3


class FeatureError(ValueError):
    pass


class SchemaMismatchError(FeatureError):
    """Two feature sets with different schema or version cannot be compared."""


class AllMissingColumnError(FeatureError):
    pass


@dataclass(frozen=True)
class FeatureSchema:
    name: str
    dim: int
    bins: int | None = None
    per_column: bool = False


SCHEMAS: dict[str, FeatureSchema] = {
    "full": FeatureSchema("full", 70, bins=30),
    "scalars": FeatureSchema("scalars", 9),
    "scalars10": FeatureSchema("scalars10", 10),
    "histograms": FeatureSchema("histograms", 60, bins=30),
    "col-hists": FeatureSchema("col-hists", 50, bins=50, per_column=True),
    "corr-hists": FeatureSchema("corr-hists", 50, bins=50),
}


def get_schema(name: str) -> FeatureSchema:
    if name not in SCHEMAS:
        raise FeatureError(f"unknown feature schema: {name!r} (have {sorted(SCHEMAS)})")
    return SCHEMAS[name]


# -- order-canonical reductions ----------------------------------------------
#
# np.sum over a permuted array is not bitwise reproducible, so every multiset
# reduction sorts first. Inputs are small (columns of one table), cost is noise.


def _stable_sum(x: np.ndarray) -> float:
    return float(np.sum(np.sort(x)))


def _stable_mean(x: np.ndarray) -> float:
    return _stable_sum(x) / len(x) if len(x) else 0.0


def _stable_pop_std(x: np.ndarray) -> float:
    if len(x) == 0:
        return 0.0
    mu = _stable_mean(x)
    var = _stable_sum((np.sort(x) - mu) ** 2) / len(x)
    return float(np.sqrt(var)) if var > 0 else 0.0


def _column_moments(values: np.ndarray) -> tuple[float, float]:
    """Population skewness and excess kurtosis of one numeric column.

    Zero-variance (or empty) columns contribute exactly (0, 0).
    """
    x = np.sort(values)
    n = len(x)
    if n == 0:
        return 0.0, 0.0
    mu = float(np.sum(x)) / n
    d = x - mu
    m2 = float(np.sum(d**2)) / n
    if m2 <= 0.0:
        return 0.0, 0.0
    m3 = float(np.sum(d**3)) / n
    m4 = float(np.sum(d**4)) / n
    return m3 / m2**1.5, m4 / m2**2 - 3.0


def _categorical_entropy(col: Column) -> float:
    """Shannon entropy (nats) of the empirical value distribution."""
    present = col.non_missing()
    if len(present) == 0:
        return 0.0
    _, counts = np.unique(present, return_counts=True)
    p = counts / counts.sum()
    return float(-np.sum(np.sort(p * np.log(p))))


def _pairwise_abs_correlations(table: Table) -> np.ndarray:
    """Multiset {|rho_jk|, j < k} over numeric columns, sorted ascending.

    Pairs with fewer than MIN_CORRELATION_ROWS complete rows, or with zero
    variance on the complete rows, are skipped.
    """
    cols = table.numeric_columns()
    out = []
    for j in range(len(cols)):
        for k in range(j + 1, len(cols)):
            x, y = cols[j].values, cols[k].values
            mask = ~(np.isnan(x) | np.isnan(y))
            if int(mask.sum()) < MIN_CORRELATION_ROWS:
                continue
            xs, ys = x[mask], y[mask]
            n = len(xs)
            # sum sorted multisets so the result is bitwise independent of
            # row order and of which column plays x
            mx = float(np.sum(np.sort(xs))) / n
            my = float(np.sum(np.sort(ys))) / n
            dx, dy = xs - mx, ys - my
            vx = float(np.sum(np.sort(dx * dx)))
            vy = float(np.sum(np.sort(dy * dy)))
            if vx <= 0.0 or vy <= 0.0:
                continue
            cxy = float(np.sum(np.sort(dx * dy)))
            rho = cxy / np.sqrt(vx * vy)
            out.append(min(abs(rho), 1.0))
    return np.sort(np.asarray(out, dtype=np.float64))


@dataclass(frozen=True)
class ScalarFeatures:
    n_cols: int
    categorical_ratio: float
    mean_cat_cardinality: float
    max_cat_cardinality: float
    mean_skewness: float
    skewness_std: float
    mean_kurtosis: float
    mean_cat_entropy: float
    mean_abs_corr: float
    std_abs_corr: float
    prop_high_corr: float

    def vector(self, *, include_skew_std: bool = False) -> np.ndarray:
        vals = [
            self.categorical_ratio,
            self.mean_cat_cardinality,
            self.max_cat_cardinality,
            self.mean_skewness,
            self.mean_kurtosis,
            self.mean_cat_entropy,
            self.mean_abs_corr,
            self.std_abs_corr,
            self.prop_high_corr,
        ]
        if include_skew_std:
            vals.insert(4, self.skewness_std)
        return np.asarray(vals, dtype=np.float64)


def scalar_features(table: Table) -> ScalarFeatures:
    """Scalar distributional summaries of one table.

    Categorical aggregates run over kappa < 0.2 columns, moments over
    numeric columns, correlation summaries over the |rho| multiset.
    """
    cats = table.categorical_columns()
    nums = table.numeric_columns()

    if cats:
        cards = np.asarray([c.cardinality for c in cats], dtype=np.float64)
        mean_card = _stable_mean(cards)
        max_card = float(np.max(cards))
        entropy = _stable_mean(np.asarray([_categorical_entropy(c) for c in cats]))
    else:
        mean_card = max_card = entropy = 0.0

    if nums:
        moments = [_column_moments(c.non_missing()) for c in nums]
        skews = np.asarray([m[0] for m in moments])
        kurts = np.asarray([m[1] for m in moments])
        mean_skew = _stable_mean(skews)
        skew_std = _stable_pop_std(skews)
        mean_kurt = _stable_mean(kurts)
    else:
        mean_skew = skew_std = mean_kurt = 0.0

    rhos = _pairwise_abs_correlations(table)
    if len(rhos):
        mean_rho = _stable_mean(rhos)
        std_rho = _stable_pop_std(rhos)
        prop_high = _stable_mean((rhos >= HIGH_CORRELATION).astype(np.float64))
    else:
        mean_rho = std_rho = prop_high = 0.0

    return ScalarFeatures(
        n_cols=table.n_cols,
        categorical_ratio=len(cats) / table.n_cols,
        mean_cat_cardinality=mean_card,
        max_cat_cardinality=max_card,
        mean_skewness=mean_skew,
        skewness_std=skew_std,
        mean_kurtosis=mean_kurt,
        mean_cat_entropy=entropy,
        mean_abs_corr=mean_rho,
        std_abs_corr=std_rho,
        prop_high_corr=prop_high,
    )


def cumulative_column_histogram(column: Column, bins: int = 50) -> np.ndarray:
    """Cumulative histogram of one numeric column on min-max-normalized [0, 1].

    A constant column maps every value to 0 (all mass in the first bin).
    The output is non-decreasing with final entry exactly 1.
    """
    values = column.non_missing()
    if len(values) == 0:
        raise AllMissingColumnError(f"column {column.name}: no non-missing values")
    lo, hi = float(np.min(values)), float(np.max(values))
    x = np.zeros_like(values) if hi == lo else (values - lo) / (hi - lo)
    counts, _ = np.histogram(x, bins=bins, range=(0.0, 1.0))
    return np.cumsum(counts).astype(np.float64) / len(values)


def table_histogram_features(table: Table, bins: int = 30) -> np.ndarray:
    """Bin-wise mean and population std of per-column cumulative histograms.

    Tables without usable numeric columns yield the all-zero vector.
    """
    hists = []
    for col in table.numeric_columns():
        try:
            hists.append(cumulative_column_histogram(col, bins=bins))
        except AllMissingColumnError:
            continue
    if not hists:
        return np.zeros(2 * bins, dtype=np.float64)
    stack = np.sort(np.stack(hists), axis=0)  # canonical column order per bin
    n = stack.shape[0]
    mean = stack.sum(axis=0) / n
    var = ((stack - mean) ** 2).sum(axis=0) / n
    return np.concatenate([mean, np.sqrt(var)])


def correlation_histogram(table: Table, bins: int = 50) -> np.ndarray:
    """Histogram over [0, 1] of absolute pairwise correlations, sum 1.

    Fewer than two usable numeric columns (or no valid pairs) yields zeros.
    """
    rhos = _pairwise_abs_correlations(table)
    if len(rhos) == 0:
        return np.zeros(bins, dtype=np.float64)
    counts, _ = np.histogram(rhos, bins=bins, range=(0.0, 1.0))
    return counts.astype(np.float64) / len(rhos)


def full_features(table: Table) -> np.ndarray:
    """The complete 70-dim vector: [n_cols] + 9 scalars + 60 histogram stats."""
    sf = scalar_features(table)
    return np.concatenate(
        [
            np.asarray([float(table.n_cols)]),
            sf.vector(),
            table_histogram_features(table, bins=SCHEMAS["full"].bins),
        ]
    )


def featurize_table(table: Table, schema: FeatureSchema) -> tuple[np.ndarray, list[str]]:
    """Feature rows for one table: a single row, or one per numeric column
    for the per-column schema. Returns (rows, origin ids)."""
    if schema.name == "full":
        return full_features(table)[None, :], [table.source_id]
    if schema.name == "scalars":
        return scalar_features(table).vector()[None, :], [table.source_id]
    if schema.name == "scalars10":
        return scalar_features(table).vector(include_skew_std=True)[None, :], [table.source_id]
    if schema.name == "histograms":
        return table_histogram_features(table, bins=schema.bins)[None, :], [table.source_id]
    if schema.name == "corr-hists":
        return correlation_histogram(table, bins=schema.bins)[None, :], [table.source_id]
    if schema.name == "col-hists":
        rows, origins = [], []
        for j, col in enumerate(table.columns):
            if col.kind is not ColumnKind.NUMERIC or not col.is_numeric_data:
                continue
            try:
                rows.append(cumulative_column_histogram(col, bins=schema.bins))
            except AllMissingColumnError:
                continue
            origins.append(f"{table.source_id}#c{j}")
        if not rows:
            return np.zeros((0, schema.dim)), []
        return np.stack(rows), origins
    raise FeatureError(f"unhandled schema {schema.name}")


@dataclass(frozen=True)
class FeatureMatrix:
    schema: FeatureSchema
    values: np.ndarray
    origins: tuple[str, ...]
    version: str = FEATURE_FILE_VERSION

    def __post_init__(self) -> None:
        if self.values.ndim != 2 or self.values.shape[1] != self.schema.dim:
            raise FeatureError(
                f"feature matrix shape {self.values.shape} does not match "
                f"schema {self.schema.name} (dim {self.schema.dim})"
            )
        if len(self.origins) != self.values.shape[0]:
            raise FeatureError("origin count does not match row count")
        if not np.all(np.isfinite(self.values)):
            raise FeatureError("feature matrix contains NaN/inf")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]


def check_comparable(a: FeatureMatrix, b: FeatureMatrix) -> None:
    if a.schema.name != b.schema.name or a.version != b.version:
        raise SchemaMismatchError(
            f"cannot compare {a.schema.name} v{a.version} with {b.schema.name} v{b.version}"
        )


def _featurize_entry(args) -> tuple[int, np.ndarray | None, list[str], str | None]:
    index, table_or_none, path, load_options, schema_name = args
    schema = get_schema(schema_name)
    try:
        if table_or_none is not None:
            table = table_or_none
        else:
            table = load_table(path["path"], source_id=path["source_id"], **load_options)
        rows, origins = featurize_table(table, schema)
        return index, rows, origins, None
    except Exception as exc:  # per-table failures become skipped rows
        return index, None, [], f"{type(exc).__name__}: {exc}"


def featurize_corpus(
    corpus: CorpusHandle,
    schema: FeatureSchema | str,
    *,
    workers: int = 1,
    max_skip_fraction: float = 0.1,
) -> tuple[FeatureMatrix, list[tuple[str, str]]]:
    """Featurize every table in manifest order.

    Per-table failures are skipped and reported as (source_id, reason); more
    than ``max_skip_fraction`` of tables skipping is an error. Results are
    assembled by manifest index, so any worker count yields identical output.
    """
    if isinstance(schema, str):
        schema = get_schema(schema)

    tasks = []
    for i, entry in enumerate(corpus.entries):
        in_memory = corpus.memory_tables.get(entry.source_id) if corpus.memory_tables else None
        tasks.append(
            (
                i,
                in_memory,
                {"path": entry.path, "source_id": entry.source_id},
                corpus.load_options,
                schema.name,
            )
        )

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_featurize_entry, tasks, chunksize=8))
    else:
        results = [_featurize_entry(t) for t in tasks]

    results.sort(key=lambda r: r[0])
    blocks, origins, skipped = [], [], []
    for index, rows, origin, err in results:
        if err is not None:
            skipped.append((corpus.entries[index].source_id, err))
            continue
        if rows.shape[0]:
            blocks.append(rows)
            origins.extend(origin)

    if len(skipped) > max_skip_fraction * len(corpus.entries):
        raise FeatureError(
            f"{len(skipped)}/{len(corpus.entries)} tables failed to featurize: "
            + "; ".join(f"{sid} ({msg})" for sid, msg in skipped[:5])
        )
    values = np.concatenate(blocks, axis=0) if blocks else np.zeros((0, schema.dim))
    return FeatureMatrix(schema=schema, values=values, origins=tuple(origins)), skipped


# -- persistence --------------------------------------------------------------
#
# Binary layout: magic, u32 header length, JSON header {schema, version, dim,
# n_rows}, row-major float64 little-endian, u32 origins length, JSON origins.


def save_features(fm: FeatureMatrix, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = json.dumps(
        {
            "schema": fm.schema.name,
            "version": fm.version,
            "dim": fm.schema.dim,
            "n_rows": fm.n_rows,
        },
        sort_keys=True,
    ).encode("utf-8")
    origins = json.dumps(list(fm.origins)).encode("utf-8")
    body = np.ascontiguousarray(fm.values, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(FEATURE_FILE_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(body)
        fh.write(struct.pack("<I", len(origins)))
        fh.write(origins)


def load_features(path: str | Path) -> FeatureMatrix:
    with open(path, "rb") as fh:
        magic = fh.read(len(FEATURE_FILE_MAGIC))
        if magic != FEATURE_FILE_MAGIC:
            raise FeatureError(f"{path}: not a feature file")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        schema = get_schema(header["schema"])
        n = int(header["n_rows"])
        body = fh.read(n * schema.dim * 8)
        values = np.frombuffer(body, dtype="<f8").reshape(n, schema.dim).copy()
        (olen,) = struct.unpack("<I", fh.read(4))
        origins = tuple(json.loads(fh.read(olen).decode("utf-8")))
    return FeatureMatrix(
        schema=schema, values=values, origins=origins, version=header["version"]
    )


def export_features_csv(fm: FeatureMatrix, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("origin," + ",".join(f"f{i}" for i in range(fm.schema.dim)) + "\n")
        for origin, row in zip(fm.origins, fm.values):
            fh.write(origin + "," + ",".join(repr(float(v)) for v in row) + "\n")
