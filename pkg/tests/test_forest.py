import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import mixed_dataset
from oracles import all_split_gains, node_members, path_walk_predict, split_gain
from rfcontrib.data import CATEGORICAL, CLASSIFICATION, REGRESSION, Dataset, FeatureSpec, Schema
from rfcontrib.errors import ConfigError, DataError, DegenerateError, SchemaError
from rfcontrib.forest import (
    TrainConfig, best_split, bootstrap_sample, category_partitions, gini_impurity, majority_vote, oob_error,
    predict, predict_oob, train_forest,
)


def _onehot(ds):
    if ds.task == CLASSIFICATION:
        return np.eye(ds.n_classes)[ds.y]
    return ds.y[:, None].astype(float)


# --- configuration ----------------------------------------------------------

def test_config_defaults():
    reg = TrainConfig(REGRESSION).resolve(100, 7)
    assert (reg.mtry, reg.min_node_size, reg.sample_size, reg.replace) == (2, 5, 100, True)
    cls = TrainConfig(CLASSIFICATION).resolve(100, 9)
    assert (cls.mtry, cls.min_node_size) == (3, 1)
    strat = TrainConfig(CLASSIFICATION, stratify=(10, 20, 30)).resolve(100, 9)
    assert strat.sample_size == 60


@pytest.mark.parametrize("kw", [
    dict(mtry=0), dict(mtry=8), dict(n_tree=0), dict(sample_size=0), dict(min_node_size=0),
    dict(replace=False, sample_size=101), dict(task="ranking"),
    dict(task=CLASSIFICATION, stratify=(5, 5), sample_size=11),
])
def test_config_rejects(kw):
    with pytest.raises(ConfigError):
        TrainConfig(**kw).resolve(100, 7)


def test_stratify_requires_classification():
    with pytest.raises(ConfigError):
        TrainConfig(REGRESSION, stratify=(1, 2)).resolve(100, 3)


def test_config_round_trip():
    cfg = TrainConfig(CLASSIFICATION, n_tree=7, stratify=(1, 2, 3), seed=4)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


# --- bootstrap --------------------------------------------------------------

def test_bootstrap_with_replacement_sums_to_sample_size():
    ds = mixed_dataset(150, seed=0)
    for j in range(5):
        w = bootstrap_sample(ds, TrainConfig(REGRESSION, seed=1, sample_size=90), j)
        assert w.sum() == 90 and w.min() >= 0


def test_bootstrap_without_replacement_is_a_subset():
    ds = mixed_dataset(150, seed=0)
    w = bootstrap_sample(ds, TrainConfig(REGRESSION, seed=1, sample_size=80, replace=False), 3)
    assert w.sum() == 80 and set(np.unique(w)) <= {0, 1}


@pytest.mark.parametrize("replace", [True, False])
def test_stratified_bootstrap_counts(replace):
    ds = mixed_dataset(240, seed=2, task=CLASSIFICATION)
    counts = ds.class_counts()
    strat = tuple(int(min(c, 30) - 5 * k) for k, c in enumerate(counts))
    cfg = TrainConfig(CLASSIFICATION, seed=2, stratify=strat, replace=replace)
    for j in range(4):
        w = bootstrap_sample(ds, cfg, j)
        got = np.bincount(ds.y, weights=w, minlength=ds.n_classes)
        np.testing.assert_array_equal(got, strat)


def test_stratify_impossible_without_replacement():
    ds = mixed_dataset(60, seed=2, task=CLASSIFICATION)
    too_many = tuple(int(c) + (k == 0) for k, c in enumerate(ds.class_counts()))
    with pytest.raises(ConfigError):
        train_forest(ds, TrainConfig(CLASSIFICATION, n_tree=1, stratify=too_many, replace=False))


def test_bootstrap_is_per_tree_deterministic():
    ds = mixed_dataset(100, seed=0)
    cfg = TrainConfig(REGRESSION, seed=11)
    a, b = bootstrap_sample(ds, cfg, 2), bootstrap_sample(ds, cfg, 2)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, bootstrap_sample(ds, cfg, 3))


# --- split search -----------------------------------------------------------

def test_gini_impurity():
    assert gini_impurity([5, 5]) == pytest.approx(0.5)
    assert gini_impurity([3, 0, 0]) == 0.0
    with pytest.raises(DegenerateError):
        gini_impurity([0, 0])


@pytest.mark.parametrize("levels", [2, 3, 4, 6])
def test_category_partitions_count(levels):
    parts = category_partitions(levels)
    assert len(parts) == 2 ** (levels - 1) - 1
    assert len(set(parts)) == len(parts)
    assert all(levels not in p for p in parts)


@pytest.mark.parametrize("task,seed", [(CLASSIFICATION, s) for s in range(4)] + [(REGRESSION, s) for s in range(4)])
def test_best_split_matches_brute_force(task, seed):
    ds = mixed_dataset(40, seed=seed, task=task)
    rule = best_split(ds)
    y = _onehot(ds)
    w = np.ones(ds.n_rows)
    gains = all_split_gains(ds.X, y, w, ds.is_categorical)
    left = np.array([rule.goes_left(v) for v in ds.X[:, rule.feature]])
    assert split_gain(y, w, left) == pytest.approx(max(gains), rel=1e-12, abs=1e-12)


def test_best_split_weighted_rows():
    ds = mixed_dataset(50, seed=7, task=CLASSIFICATION)
    w = np.random.default_rng(0).integers(0, 3, ds.n_rows)
    rule = best_split(ds, weights=w)
    y = _onehot(ds)
    gains = all_split_gains(ds.X, y, w.astype(float), ds.is_categorical)
    left = np.array([rule.goes_left(v) for v in ds.X[:, rule.feature]])
    assert split_gain(y, w.astype(float), left) == pytest.approx(max(gains), rel=1e-12)


def test_best_split_none_when_constant():
    schema = Schema((FeatureSpec("a"),), "y", REGRESSION)
    ds = Dataset(schema, np.zeros((6, 1)), np.arange(6.0))
    assert best_split(ds) is None


def test_categorical_split_finds_level_grouping():
    rng = np.random.default_rng(3)
    codes = rng.integers(1, 5, 200).astype(float)
    y = np.where(np.isin(codes, [1, 3]), 1.0, 0.0)
    schema = Schema((FeatureSpec("c", CATEGORICAL, ("a", "b", "c", "d")),), "y", REGRESSION)
    rule = best_split(Dataset(schema, codes[:, None], y))
    assert set(rule.left_levels) in ({1, 3}, {2, 4})


# --- fitted trees -----------------------------------------------------------

@pytest.mark.parametrize("fixture", ["mixed_reg", "mixed_cls", "cls3_model"])
def test_node_values_are_weighted_means(request, fixture):
    ds, model = request.getfixturevalue(fixture)
    y = _onehot(ds)
    for j in range(0, model.n_tree, 7):
        tree = model.trees[j]
        w = model.in_bag[:, j].astype(float)
        members = node_members(tree, ds.X, w, ds.is_categorical)
        for node in range(tree.n_nodes):
            m = members[node]
            assert m.sum() == tree.count[node]
            np.testing.assert_allclose(tree.value[node], (m[:, None] * y).sum(axis=0) / m.sum(), atol=1e-9, rtol=0)


def test_class_probabilities_normalized(cls3_model, mixed_cls):
    for ds, model in (cls3_model, mixed_cls):
        for tree in model.trees:
            assert np.max(np.abs(tree.value.sum(axis=1) - 1)) <= 1e-12
            assert tree.value.min() >= 0
        p = predict(model, ds)
        assert np.max(np.abs(p.sum(axis=1) - 1)) <= 1e-12


def test_min_node_size_respected(mixed_reg):
    ds, model = mixed_reg
    for tree in model.trees:
        internal = tree.feature >= 0
        assert np.all(tree.count[internal] >= model.config.min_node_size)


@pytest.mark.parametrize("fixture", ["mixed_reg", "mixed_cls"])
def test_predict_matches_path_walk(request, fixture):
    ds, model = request.getfixturevalue(fixture)
    got = predict(model, ds).reshape(ds.n_rows, -1)
    np.testing.assert_allclose(got, path_walk_predict(model, ds.X), atol=1e-12, rtol=0)


def test_majority_vote_ties_go_low():
    np.testing.assert_array_equal(majority_vote(np.array([[0.4, 0.4, 0.2], [0.1, 0.2, 0.7]])), [0, 2])


def test_training_independent_of_threads():
    ds = mixed_dataset(120, seed=4)
    cfg = TrainConfig(REGRESSION, n_tree=12, seed=8)
    a, b = train_forest(ds, cfg, threads=1), train_forest(ds, cfg, threads=3)
    np.testing.assert_array_equal(a.in_bag, b.in_bag)
    for ta, tb in zip(a.trees, b.trees):
        for name in ("feature", "threshold", "cat_mask", "left", "right", "count", "value"):
            np.testing.assert_array_equal(getattr(ta, name), getattr(tb, name))
    np.testing.assert_array_equal(predict(a, ds, threads=1), predict(b, ds, threads=4))


def test_oob_fraction(reg_model):
    ds, model = reg_model
    assert abs(np.mean(model.in_bag == 0) - np.exp(-1)) < 0.02


def test_oob_predictions(mixed_reg):
    ds, model = mixed_reg
    oob = predict_oob(model, ds)
    assert oob.n_undefined == int(np.sum(model.oob_counts() == 0))
    res = oob_error(model, ds)
    assert 0 < res["explained_variance"] < 1 and res["n_used"] == ds.n_rows - oob.n_undefined


def test_oob_requires_training_set(mixed_reg):
    ds, model = mixed_reg
    other = mixed_dataset(200, seed=99)
    with pytest.raises(SchemaError):
        predict_oob(model, other)


def test_query_rejects_bad_codes(mixed_reg):
    ds, model = mixed_reg
    X = ds.X[:3].copy()
    X[1, 2] = 9
    with pytest.raises(SchemaError, match="row 1"):
        predict(model, X)
    with pytest.raises(SchemaError):
        predict(model, ds.X[:, :3])


def test_too_many_levels_rejected():
    n = 40
    schema = Schema((FeatureSpec("c", CATEGORICAL, tuple(f"l{i}" for i in range(20))),), "y", REGRESSION)
    X = (np.arange(n) % 20 + 1).astype(float)[:, None]
    with pytest.raises(ConfigError, match="20 levels"):
        train_forest(Dataset(schema, X, np.arange(n, dtype=float)), TrainConfig(REGRESSION, n_tree=1))


def test_single_class_rejected():
    schema = Schema((FeatureSpec("a"),), "y", CLASSIFICATION, ("u", "v"))
    ds = Dataset(schema, np.arange(10.0)[:, None], np.zeros(10, np.int64))
    with pytest.raises(DataError):
        train_forest(ds, TrainConfig(CLASSIFICATION, n_tree=1))


def test_task_mismatch(mixed_reg):
    with pytest.raises(ConfigError):
        train_forest(mixed_reg[0], TrainConfig(CLASSIFICATION, n_tree=1))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32), st.integers(8, 30), st.integers(1, 4))
def test_random_small_forests_predict_like_path_walk(seed, n, n_tree):
    ds = mixed_dataset(n, seed=seed % 1000, task=CLASSIFICATION if seed % 2 else REGRESSION)
    model = train_forest(ds, TrainConfig(ds.task, n_tree=n_tree, seed=seed, min_node_size=1))
    got = predict(model, ds).reshape(n, -1)
    np.testing.assert_allclose(got, path_walk_predict(model, ds.X), atol=1e-12, rtol=0)
