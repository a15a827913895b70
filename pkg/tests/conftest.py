from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tabaudit.tables import Table, column_from_values, table_from_columns


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_table(rng: np.random.Generator, source_id: str = "t", *, missing_frac: float = 0.0) -> Table:
    """Small random table mixing numeric and low-cardinality columns."""
    n_rows = int(rng.integers(20, 60))
    n_cols = int(rng.integers(2, 7))
    cols = []
    for j in range(n_cols):
        if rng.random() < 0.3:
            vals = rng.integers(0, 3, size=n_rows).astype(float)
        else:
            vals = rng.normal(size=n_rows)
        if missing_frac > 0:
            mask = rng.random(n_rows) < missing_frac
            vals = vals.copy()
            vals[mask] = np.nan
            if np.all(np.isnan(vals)):
                vals[0] = 1.0
        cols.append(column_from_values(f"c{j}", vals))
    return table_from_columns(source_id, cols)
