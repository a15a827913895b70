from __future__ import annotations

import collections

import networkx as nx
import numpy as np
import pytest

from tabaudit.prior import (
    FeedForward,
    FixedSampler,
    GenerationRequest,
    PriorConfig,
    PriorError,
    ScmType,
    TreeEnsemble,
    TreeFamily,
    UniformIntSampler,
    generate_corpus,
    generate_table,
    load_prior_config,
    sample_column_counts,
    sample_dag,
    sample_mechanism,
    save_prior_config,
)
from tabaudit.features import featurize_corpus
from tabaudit.seeding import rng_from
from tabaudit.tables import ColumnKind, save_table


def theta(**kw) -> PriorConfig:
    kw.setdefault("col_bounds", (2, 12))
    return PriorConfig(**kw)


class TestPriorConfig:
    def test_bounds_enforced(self):
        with pytest.raises(PriorError):
            theta(max_classes=1)
        with pytest.raises(PriorError):
            theta(p_categorical=0.7)
        with pytest.raises(PriorError):
            theta(scm_type=ScmType.TREE, depth_rate=0.1)
        with pytest.raises(PriorError):
            theta(scm_type=ScmType.MIX, p_mlp=1.5)

    def test_inactive_fields_not_validated(self):
        # depth_rate out of range is fine for a pure MLP prior
        cfg = theta(scm_type=ScmType.MLP, depth_rate=0.7)
        assert cfg.scm_type is ScmType.MLP

    def test_text_round_trip_exact(self, tmp_path):
        cfg = theta(
            max_classes=7,
            p_categorical=0.123456789012345,
            p_ordered=0.25,
            balanced=True,
            replay_small=True,
            scm_type=ScmType.MIX,
            tree_family=TreeFamily.EXTRA_TREES,
            depth_rate=0.77,
            estimators_rate=0.31,
            p_mlp=1.0 / 3.0,
        )
        save_prior_config(cfg, tmp_path / "theta.cfg")
        again = load_prior_config(tmp_path / "theta.cfg")
        assert again == cfg

    def test_mlp_config_omits_tree_fields(self):
        text = theta(scm_type=ScmType.MLP).to_text()
        assert "tree_family" not in text
        assert "p_mlp" not in text


class TestSampleDag:
    def test_two_nodes_single_edge(self):
        g = sample_dag(2, rng_from(0))
        n_edges = sum(len(p) for p in g.parents)
        assert n_edges == 1

    def test_acyclic_and_reachable(self):
        for seed in range(60):
            n = int(rng_from(seed, 1).integers(2, 15))
            g = sample_dag(n, rng_from(seed))
            dg = nx.DiGraph()
            dg.add_nodes_from(range(n))
            for child, parents in enumerate(g.parents):
                dg.add_edges_from((p, child) for p in parents)
            assert nx.is_directed_acyclic_graph(dg)
            root = g.order[0]
            reachable = nx.descendants(dg, root) | {root}
            assert reachable == set(range(n))

    def test_same_seed_identical(self):
        g1 = sample_dag(10, rng_from(99))
        g2 = sample_dag(10, rng_from(99))
        assert g1.parents == g2.parents
        assert g1.order == g2.order

    def test_min_nodes(self):
        with pytest.raises(PriorError):
            sample_dag(1, rng_from(0))


class TestSampleMechanism:
    def test_mix_all_mlp(self):
        cfg = theta(scm_type=ScmType.MIX, p_mlp=1.0)
        for i in range(20):
            m = sample_mechanism(cfg, 3, rng_from(i))
            assert isinstance(m, FeedForward)

    def test_decision_tree_single_estimator(self):
        cfg = theta(scm_type=ScmType.TREE, tree_family=TreeFamily.DECISION_TREE)
        for i in range(50):
            m = sample_mechanism(cfg, 2, rng_from(i))
            assert isinstance(m, TreeEnsemble)
            assert m.n_estimators == 1

    def test_depth_rate_one_mean_depth_two(self):
        cfg = theta(scm_type=ScmType.TREE, depth_rate=1.0)
        rng = rng_from(7)
        depths = [sample_mechanism(cfg, 2, rng).depth for _ in range(10_000)]
        assert np.mean(depths) == pytest.approx(2.0, abs=1e-9)  # geometric(1) is always 1

    def test_depth_rate_monte_carlo(self):
        cfg = theta(scm_type=ScmType.TREE, depth_rate=0.5)
        rng = rng_from(8)
        depths = [sample_mechanism(cfg, 2, rng).depth for _ in range(20_000)]
        # 1 + Geometric(0.5) capped at 8; cap trims the tail mean slightly
        uncapped = 1 + 1 / 0.5
        assert abs(np.mean(depths) - uncapped) < 0.05

    def test_caps_respected(self):
        cfg = theta(scm_type=ScmType.TREE, depth_rate=0.3, estimators_rate=0.3)
        rng = rng_from(9)
        for _ in range(2000):
            m = sample_mechanism(cfg, 2, rng)
            assert 1 <= m.depth <= 8
            assert 1 <= m.n_estimators <= 32

    def test_gradient_boosted_stage_scale(self):
        m = TreeEnsemble(family=TreeFamily.GRADIENT_BOOSTED, depth=2, n_estimators=4, seed=5)
        parents = rng_from(1).normal(size=(50, 2))
        out = m(parents)
        assert out.shape == (50,)
        assert np.all(np.isfinite(out))


class TestGenerateTable:
    def test_p_cat_zero_all_feature_columns_numeric(self):
        for seed in range(10):
            t = generate_table(GenerationRequest(theta(p_categorical=0.0), 80, 5, seed))
            for col in t.columns[:-1]:
                assert col.kind is ColumnKind.NUMERIC

    def test_balanced_two_classes_101_rows(self):
        cfg = theta(balanced=True, max_classes=2)
        t = generate_table(GenerationRequest(cfg, 101, 3, seed=4))
        counts = sorted(collections.Counter(t.columns[-1].values).values())
        assert counts == [50, 51]

    def test_balanced_counts_differ_at_most_one(self):
        cfg = theta(balanced=True, max_classes=6)
        for seed in range(40):
            t = generate_table(GenerationRequest(cfg, 97, 4, seed=seed))
            counts = collections.Counter(t.columns[-1].values).values()
            assert max(counts) - min(counts) <= 1

    def test_class_count_in_range(self):
        cfg = theta(max_classes=5)
        for seed in range(60):
            t = generate_table(GenerationRequest(cfg, 120, 3, seed=seed))
            c = len(set(t.columns[-1].values))
            assert 2 <= c <= 5

    def test_deterministic_byte_identical(self, tmp_path):
        req = GenerationRequest(theta(p_categorical=0.4), 60, 6, seed=77)
        t1 = generate_table(req)
        t2 = generate_table(req)
        save_table(t1, tmp_path / "a.csv")
        save_table(t2, tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_categorical_fraction_matches_p_cat(self):
        cfg = theta(p_categorical=0.5)
        total, cat = 0, 0
        for seed in range(300):
            t = generate_table(GenerationRequest(cfg, 100, 4, seed=seed))
            for col in t.columns[:-1]:
                total += 1
                cat += col.kind is ColumnKind.CATEGORICAL
        assert abs(cat / total - 0.5) < 0.05

    def test_request_validation(self):
        with pytest.raises(PriorError):
            GenerationRequest(theta(), 50, 100, seed=0)  # cols out of bounds
        with pytest.raises(PriorError):
            GenerationRequest(theta(balanced=True, max_classes=20), 10, 3, seed=0)

    def test_categorical_columns_trip_kappa(self):
        cfg = theta(p_categorical=0.6)
        for seed in range(20):
            t = generate_table(GenerationRequest(cfg, 200, 6, seed=seed))
            for col in t.columns[:-1]:
                if col.kind is ColumnKind.CATEGORICAL:
                    assert col.uniqueness_ratio < 0.2
                    assert 2 <= col.cardinality <= 12


class TestColumnCountSampler:
    def test_constant_counts(self):
        full, _ = _small_features()
        # overwrite column counts to a constant
        vals = full.values.copy()
        vals[:, 0] = 7.0
        from tabaudit.features import FeatureMatrix

        fm = FeatureMatrix(schema=full.schema, values=vals, origins=full.origins)
        sampler = sample_column_counts(fm)
        rng = rng_from(0)
        assert all(sampler(rng) == 7 for _ in range(50))

    def test_empirical_frequencies(self):
        counts = [2, 2, 2, 10]
        from tabaudit.prior import ColumnCountSampler

        sampler = ColumnCountSampler(counts)
        rng = rng_from(1)
        draws = [sampler(rng) for _ in range(10_000)]
        freq2 = sum(d == 2 for d in draws) / len(draws)
        assert abs(freq2 - 0.75) < 0.02
        assert set(draws) <= {2, 10}

    def test_bounds_filtering(self):
        from tabaudit.prior import ColumnCountSampler

        sampler = ColumnCountSampler([1, 5, 9, 30], bounds=(2, 12))
        assert set(sampler.counts.tolist()) == {5, 9}
        with pytest.raises(PriorError):
            ColumnCountSampler([30], bounds=(2, 12))

    def test_requires_full_schema(self):
        _, scalars = _small_features()
        with pytest.raises(PriorError):
            sample_column_counts(scalars)


def _small_features():
    corpus = generate_corpus(
        theta(), 15, UniformIntSampler(3, 8), FixedSampler(60), master_seed=50
    )
    full, _ = featurize_corpus(corpus, "full")
    scal, _ = featurize_corpus(corpus, "scalars")
    return full, scal


class TestGenerateCorpus:
    def test_manifest_count(self):
        corpus = generate_corpus(theta(), 200, FixedSampler(5), FixedSampler(40), master_seed=3)
        assert len(corpus) == 200

    def test_no_replay_all_fresh(self):
        cfg = theta(replay_small=False)
        corpus = generate_corpus(cfg, 30, FixedSampler(4), FixedSampler(30), master_seed=1)
        ids = [e.source_id for e in corpus.entries]
        assert len(set(ids)) == 30

    def test_replay_emits_resamples(self):
        cfg = theta(replay_small=True)
        c_replay = generate_corpus(cfg, 60, FixedSampler(4), FixedSampler(30), master_seed=2)
        c_fresh = generate_corpus(
            theta(replay_small=False), 60, FixedSampler(4), FixedSampler(30), master_seed=2
        )
        replay_tables = list(c_replay.tables())
        fresh_tables = list(c_fresh.tables())
        n_diff = sum(
            not np.array_equal(a.columns[0].values, b.columns[0].values)
            for a, b in zip(replay_tables, fresh_tables)
        )
        assert n_diff > 0  # some slots replayed cached tables

    def test_replay_above_threshold_never_caches(self):
        cfg = theta(replay_small=True)
        c1 = generate_corpus(
            cfg, 40, FixedSampler(4), FixedSampler(300), master_seed=2, replay_threshold=100
        )
        c2 = generate_corpus(
            theta(replay_small=False), 40, FixedSampler(4), FixedSampler(300), master_seed=2,
            replay_threshold=100,
        )
        for a, b in zip(c1.tables(), c2.tables()):
            np.testing.assert_array_equal(a.columns[0].values, b.columns[0].values)

    def test_deterministic_across_workers(self, tmp_path):
        cfg = theta(p_categorical=0.3)
        c1 = generate_corpus(
            cfg, 24, UniformIntSampler(3, 6), UniformIntSampler(30, 80), master_seed=9,
            out_dir=tmp_path / "w1", workers=1,
        )
        c2 = generate_corpus(
            cfg, 24, UniformIntSampler(3, 6), UniformIntSampler(30, 80), master_seed=9,
            out_dir=tmp_path / "w2", workers=4,
        )
        for e1, e2 in zip(c1.entries, c2.entries):
            b1 = (tmp_path / "w1" / f"{e1.source_id}.csv").read_bytes()
            b2 = (tmp_path / "w2" / f"{e2.source_id}.csv").read_bytes()
            assert b1 == b2

    def test_disk_round_trip(self, tmp_path):
        corpus = generate_corpus(
            theta(), 5, FixedSampler(4), FixedSampler(25), master_seed=11, out_dir=tmp_path / "c"
        )
        loaded = list(corpus.tables())
        assert len(loaded) == 5
        assert all(t.n_cols == 4 for t in loaded)  # 3 features + target
