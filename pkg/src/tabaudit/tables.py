"""Tables, corpora and the uniqueness-ratio column classifier.

A table is an ordered collection of columns parsed from delimited text.
Cells are numeric values, category tokens, or missing. Column kind is
decided purely by the uniqueness ratio kappa = cardinality / n_rows:
kappa < 0.2 means categorical, anything else numeric.

Parsing policy for messy (web-scraped style) files:
  * empty cells are missing, never tokens;
  * a column is numeric-typed if >= 99% of its non-missing cells parse as
    finite reals, in which case the stray non-parsing cells become missing;
  * otherwise every non-missing cell is dictionary-encoded to an integer
    code in first-appearance order (codes carry no magnitude meaning).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

from .seeding import rng_from

CATEGORICAL_KAPPA = 0.2
NUMERIC_PARSE_FRACTION = 0.99


class TableError(ValueError):
    """Malformed table input."""


class RaggedRowError(TableError):
    pass


class EmptyTableError(TableError):
    pass


class CorpusError(ValueError):
    """Invalid corpus operation (bad sample size, duplicate ids, ...)."""


class ColumnKind(str, Enum):
    NUMERIC = "numeric"
    CATEGORICAL = "categorical"


def infer_column_kind(cardinality: int, n_rows: int) -> ColumnKind:
    """Classify a column from its distinct-value count and the table row count.

    Categorical iff cardinality / n_rows < 0.2 (strict: kappa == 0.2 is numeric).
    """
    if n_rows < 1:
        raise TableError("n_rows must be >= 1")
    kappa = cardinality / n_rows
    return ColumnKind.CATEGORICAL if kappa < CATEGORICAL_KAPPA else ColumnKind.NUMERIC


def _parse_finite(cell: str) -> float | None:
    try:
        v = float(cell)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


@dataclass(frozen=True)
class Column:
    """One table column.

    ``values`` is always float64: the numeric cells themselves when
    ``tokens`` is None, otherwise dictionary codes into ``tokens``.
    Missing cells are NaN in either representation.
    """

    name: str
    values: np.ndarray
    tokens: tuple[str, ...] | None
    cardinality: int
    uniqueness_ratio: float
    kind: ColumnKind

    @property
    def is_numeric_data(self) -> bool:
        return self.tokens is None

    def non_missing(self) -> np.ndarray:
        return self.values[~np.isnan(self.values)]

    def cell_strings(self) -> list[str]:
        """Cells as written to delimited text (missing -> empty string)."""
        out = []
        for v in self.values:
            if np.isnan(v):
                out.append("")
            elif self.tokens is not None:
                out.append(self.tokens[int(v)])
            else:
                out.append(repr(float(v)))
        return out


def column_from_cells(name: str, cells: Sequence[str], n_rows: int) -> Column:
    """Build a column from raw text cells, applying the parsing policy."""
    missing = np.array([c == "" for c in cells], dtype=bool)
    n_present = int((~missing).sum())
    parsed = [None if m else _parse_finite(c) for c, m in zip(cells, missing)]
    n_parsed = sum(p is not None for p in parsed)

    if n_present > 0 and n_parsed >= NUMERIC_PARSE_FRACTION * n_present:
        values = np.array([np.nan if p is None else p for p in parsed], dtype=np.float64)
        tokens = None
    else:
        codes: dict[str, int] = {}
        vals = np.full(len(cells), np.nan, dtype=np.float64)
        for i, (c, m) in enumerate(zip(cells, missing)):
            if m:
                continue
            if c not in codes:
                codes[c] = len(codes)
            vals[i] = codes[c]
        values = vals
        tokens = tuple(codes.keys())

    return column_from_values(name, values, tokens)


def column_from_values(
    name: str, values: np.ndarray, tokens: tuple[str, ...] | None = None
) -> Column:
    values = np.asarray(values, dtype=np.float64)
    present = values[~np.isnan(values)]
    cardinality = int(np.unique(present).size)
    n_rows = len(values)
    kappa = cardinality / n_rows if n_rows else 0.0
    return Column(
        name=name,
        values=values,
        tokens=tokens,
        cardinality=cardinality,
        uniqueness_ratio=kappa,
        kind=infer_column_kind(cardinality, n_rows),
    )


@dataclass(frozen=True)
class Table:
    columns: tuple[Column, ...]
    n_rows: int
    n_cols: int
    source_id: str

    def __post_init__(self) -> None:
        if self.n_rows < 1 or self.n_cols < 1:
            raise TableError(f"{self.source_id}: empty table")
        if self.n_cols != len(self.columns):
            raise TableError(f"{self.source_id}: n_cols inconsistent with columns")
        for col in self.columns:
            if len(col.values) != self.n_rows:
                raise TableError(f"{self.source_id}: column {col.name} has wrong length")

    def numeric_columns(self) -> list[Column]:
        """Columns usable for moments/correlations: numeric kind and numeric cells."""
        return [c for c in self.columns if c.kind is ColumnKind.NUMERIC and c.is_numeric_data]

    def categorical_columns(self) -> list[Column]:
        return [c for c in self.columns if c.kind is ColumnKind.CATEGORICAL]


def table_from_columns(source_id: str, columns: Sequence[Column]) -> Table:
    cols = tuple(columns)
    if not cols:
        raise TableError(f"{source_id}: no columns")
    return Table(columns=cols, n_rows=len(cols[0].values), n_cols=len(cols), source_id=source_id)


def load_table(
    path: str | Path,
    *,
    delimiter: str = ",",
    header: bool = True,
    ragged: str = "error",
    source_id: str | None = None,
) -> Table:
    """Parse one delimited file into a Table.

    ``ragged``: "error" rejects rows whose cell count differs from the header
    row; "pad" pads short rows with missing and truncates long ones.
    """
    path = Path(path)
    if ragged not in ("error", "pad"):
        raise ValueError(f"unknown ragged policy: {ragged!r}")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh, delimiter=delimiter))
    # a blank line is a row with one empty cell (single-column missing values
    # must round-trip); under a wider header it counts as ragged
    rows = [r if r else [""] for r in rows]

    if not rows:
        raise EmptyTableError(f"{path}: no rows")
    if header:
        names, data = rows[0], rows[1:]
    else:
        names, data = [f"col_{j}" for j in range(len(rows[0]))], rows
    if not data:
        raise EmptyTableError(f"{path}: zero data rows")

    width = len(names)
    fixed = []
    for i, r in enumerate(data):
        if len(r) != width:
            if ragged == "error":
                raise RaggedRowError(f"{path}: row {i} has {len(r)} cells, expected {width}")
            r = (r + [""] * width)[:width]
        fixed.append(r)

    sid = source_id if source_id is not None else path.name
    cols = [
        column_from_cells(names[j], [r[j] for r in fixed], len(fixed)) for j in range(width)
    ]
    return table_from_columns(sid, cols)


def save_table(table: Table, path: str | Path, *, delimiter: str = ",") -> None:
    """Write a Table as delimited text that round-trips through load_table."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cells = [col.cell_strings() for col in table.columns]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        writer.writerow([c.name for c in table.columns])
        for i in range(table.n_rows):
            writer.writerow([cells[j][i] for j in range(table.n_cols)])


@dataclass(frozen=True)
class ManifestEntry:
    source_id: str
    path: str | None
    n_rows: int
    n_cols: int


@dataclass
class CorpusHandle:
    """A corpus is a manifest plus a way to materialize each table.

    Disk corpora load from ``entry.path``; generated corpora keep tables in
    memory. Tables are immutable, so handles are safe to share.
    """

    entries: tuple[ManifestEntry, ...]
    sample_seed: int | None = None
    load_options: dict = field(default_factory=dict)
    memory_tables: dict[str, Table] | None = None

    def __post_init__(self) -> None:
        ids = [e.source_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise CorpusError("manifest source_ids are not unique")

    def __len__(self) -> int:
        return len(self.entries)

    def table(self, entry: ManifestEntry) -> Table:
        if self.memory_tables is not None and entry.source_id in self.memory_tables:
            return self.memory_tables[entry.source_id]
        if entry.path is None:
            raise CorpusError(f"{entry.source_id}: no path and not held in memory")
        return load_table(entry.path, source_id=entry.source_id, **self.load_options)

    def tables(self) -> Iterator[Table]:
        for entry in self.entries:
            yield self.table(entry)

    def manifest_dicts(self) -> list[dict]:
        return [
            {"source_id": e.source_id, "path": e.path, "n_rows": e.n_rows, "n_cols": e.n_cols}
            for e in self.entries
        ]


def write_manifest(corpus: CorpusHandle, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(corpus.manifest_dicts(), fh, indent=2)
        fh.write("\n")


def read_manifest(path: str | Path, *, load_options: dict | None = None) -> CorpusHandle:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    entries = tuple(
        ManifestEntry(d["source_id"], d["path"], int(d["n_rows"]), int(d["n_cols"])) for d in raw
    )
    return CorpusHandle(entries=entries, load_options=load_options or {})


def scan_corpus(
    root: str | Path,
    *,
    delimiter: str = ",",
    header: bool = True,
    ragged: str = "error",
) -> CorpusHandle:
    """Build a corpus from a directory tree of delimited files.

    Files are taken in sorted relative-path order, so the manifest does not
    depend on filesystem iteration order.
    """
    root = Path(root)
    paths = sorted(p for p in root.rglob("*") if p.is_file())
    if not paths:
        raise CorpusError(f"{root}: no files")
    opts = {"delimiter": delimiter, "header": header, "ragged": ragged}
    entries = []
    for p in paths:
        sid = p.relative_to(root).as_posix()
        t = load_table(p, source_id=sid, **opts)
        entries.append(ManifestEntry(sid, str(p), t.n_rows, t.n_cols))
    return CorpusHandle(entries=tuple(entries), load_options=opts)


def corpus_from_tables(tables: Sequence[Table]) -> CorpusHandle:
    entries = tuple(ManifestEntry(t.source_id, None, t.n_rows, t.n_cols) for t in tables)
    return CorpusHandle(entries=entries, memory_tables={t.source_id: t for t in tables})


def sample_corpus(
    corpus: CorpusHandle,
    n: int,
    seed: int,
    *,
    exclude_ids: frozenset[str] | set[str] = frozenset(),
) -> CorpusHandle:
    """Uniform sample of n tables without replacement, deterministic in seed.

    Entries already excluded (e.g. by a previous disjoint sample) are never
    drawn. The sampled manifest keeps the original manifest order.
    """
    pool = [i for i, e in enumerate(corpus.entries) if e.source_id not in exclude_ids]
    if n > len(pool):
        raise CorpusError(f"cannot sample {n} of {len(pool)} available tables")
    rng = rng_from(seed)
    chosen = rng.choice(len(pool), size=n, replace=False)
    keep = sorted(pool[int(i)] for i in chosen)
    return CorpusHandle(
        entries=tuple(corpus.entries[i] for i in keep),
        sample_seed=seed,
        load_options=corpus.load_options,
        memory_tables=corpus.memory_tables,
    )


def sample_disjoint(
    corpus: CorpusHandle, n_a: int, n_b: int, seed: int
) -> tuple[CorpusHandle, CorpusHandle]:
    """Two disjoint uniform samples from one corpus (shared permutation split)."""
    if n_a + n_b > len(corpus):
        raise CorpusError(f"cannot draw disjoint {n_a}+{n_b} from {len(corpus)} tables")
    first = sample_corpus(corpus, n_a, seed)
    taken = {e.source_id for e in first.entries}
    second = sample_corpus(corpus, n_b, seed, exclude_ids=taken)
    return first, second
