import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import mixed_dataset
from oracles import path_walk_contributions
from rfcontrib.data import CATEGORICAL, CLASSIFICATION, REGRESSION, Dataset, FeatureSpec, Schema
from rfcontrib.decompose import (
    OOB, PLAIN, contributions_from_dict, contributions_to_dict, feature_contributions, inbag_contribution_totals,
    oob_feature_contributions, read_contributions_json, subgroup_balance, trace_row, verify_decomposition,
    write_contributions_csv, write_contributions_json,
)
from rfcontrib.errors import DataError, VariantMismatchError
from rfcontrib.forest import TrainConfig, predict, predict_oob, train_forest


@st.composite
def mini_forests(draw):
    """Random forests of at most 5 trees on at most 16 rows and 4 features."""
    n = draw(st.integers(4, 16))
    d = draw(st.integers(1, 4))
    task = draw(st.sampled_from([REGRESSION, CLASSIFICATION]))
    seed = draw(st.integers(0, 2 ** 31))
    rng = np.random.default_rng(seed)
    feats, cols = [], []
    for j in range(d):
        if draw(st.booleans()):
            L = draw(st.integers(2, 4))
            feats.append(FeatureSpec(f"c{j}", CATEGORICAL, tuple(f"l{i}" for i in range(L))))
            cols.append(rng.integers(1, L + 1, n).astype(float))
        else:
            feats.append(FeatureSpec(f"x{j}"))
            cols.append(np.round(rng.uniform(-1, 1, n), 2))
    X = np.column_stack(cols)
    if task == REGRESSION:
        ds = Dataset(Schema(tuple(feats), "y", REGRESSION), X, rng.standard_normal(n))
    else:
        y = rng.integers(0, 3, n)
        y[:2] = [0, 1]
        ds = Dataset(Schema(tuple(feats), "y", CLASSIFICATION, ("a", "b", "c")), X, y)
    cfg = TrainConfig(task, n_tree=draw(st.integers(1, 5)), seed=seed, mtry=draw(st.integers(1, d)),
                      min_node_size=1)
    return ds, train_forest(ds, cfg, threads=1)


@settings(max_examples=40, deadline=None)
@given(mini_forests())
def test_plain_contributions_equal_path_walk(forest):
    ds, model = forest
    got = feature_contributions(model, ds)
    want, _ = path_walk_contributions(model, ds.X)
    np.testing.assert_array_equal(got.values, want)


@settings(max_examples=40, deadline=None)
@given(mini_forests())
def test_oob_contributions_equal_path_walk(forest):
    ds, model = forest
    got = oob_feature_contributions(model, ds)
    want, cnt = path_walk_contributions(model, ds.X, model.in_bag)
    np.testing.assert_array_equal(got.counts, cnt)
    np.testing.assert_array_equal(got.values, want)


@pytest.mark.parametrize("fixture", ["reg_model", "cls3_model", "mixed_reg", "mixed_cls"])
def test_decomposition_identities(request, fixture):
    ds, model = request.getfixturevalue(fixture)
    plain = feature_contributions(model, ds)
    rep = verify_decomposition(plain, predict(model, ds))
    assert rep.passed and rep.max_residual <= 1e-9
    oob = oob_feature_contributions(model, ds)
    rep = verify_decomposition(oob, predict_oob(model, ds))
    assert rep.passed and rep.rows_undefined == int(np.sum(model.oob_counts() == 0))


def test_undefined_oob_rows_are_flagged():
    ds = mixed_dataset(30, seed=5)
    model = train_forest(ds, TrainConfig(REGRESSION, n_tree=2, seed=1))
    oob = oob_feature_contributions(model, ds)
    never = model.oob_counts() == 0
    assert never.any()
    assert np.all(np.isnan(oob.values[never])) and not np.any(oob.defined[never])


def test_classification_contributions_sum_to_zero(cls3_model):
    ds, model = cls3_model
    for c in (feature_contributions(model, ds), oob_feature_contributions(model, ds)):
        v = c.values[c.defined]
        assert np.max(np.abs(v.sum(axis=2))) <= 1e-12


def test_variant_mismatch(mixed_reg):
    ds, model = mixed_reg
    with pytest.raises(VariantMismatchError):
        verify_decomposition(feature_contributions(model, ds), predict_oob(model, ds))
    with pytest.raises(VariantMismatchError):
        verify_decomposition(oob_feature_contributions(model, ds), predict(model, ds))


def test_bootstrap_term_is_mean_root_shift():
    ds = mixed_dataset(240, seed=2, task=CLASSIFICATION)
    model = train_forest(ds, TrainConfig(CLASSIFICATION, n_tree=10, seed=1, stratify=(30, 30, 30)))
    c = feature_contributions(model, ds)
    want = np.mean([t.value[0] for t in model.trees], axis=0) - model.base_rate
    np.testing.assert_allclose(c.bootstrap_term(), np.tile(want, (ds.n_rows, 1)), atol=1e-15)
    np.testing.assert_allclose(model.base_rate + want, [1 / 3] * 3, atol=1e-12)


def test_inbag_totals_cancel_per_split_feature(mixed_cls):
    ds, model = mixed_cls
    totals, weights = inbag_contribution_totals(model, ds)
    assert weights.sum() == model.in_bag.sum()
    assert np.max(np.abs(totals[:, 1:, :].sum(axis=0))) <= 1e-9


@pytest.mark.parametrize("fixture", ["mixed_cls", "mixed_reg"])
def test_binary_subgroup_balance(request, fixture):
    ds, model = request.getfixturevalue(fixture)
    bal = subgroup_balance(model, ds, "bin")
    assert bal.levels == ["no", "yes"]
    assert bal.residual <= 1e-9
    assert bal.smaller_moves_more()


def test_subgroup_balance_needs_categorical(mixed_cls):
    ds, model = mixed_cls
    with pytest.raises(DataError):
        subgroup_balance(model, ds, "a")


def test_trace_row_sums_to_tree_prediction(mixed_cls):
    ds, model = mixed_cls
    for j in (0, 5, 11):
        tr = trace_row(model, ds.X[7], j, 7)
        leaf = tr.nodes[-1]
        np.testing.assert_allclose(model.base_rate + tr.total(), model.trees[j].value[leaf], atol=1e-15)
        assert model.trees[j].feature[leaf] < 0
        assert tr.by_feature(ds.n_features).shape == (ds.n_features + 1, 3)


def test_variances_and_feature_access(reg_model):
    ds, model = reg_model
    c = feature_contributions(model, ds)
    assert c.variant == PLAIN and c.n_features == 6 and c.n_outputs == 1
    np.testing.assert_array_equal(c.feature("x2"), c.feature(1))
    v = c.variances()
    assert v.shape == (6,) and np.argmax(v) in (0, 1)


def test_csv_export(tmp_path, mixed_cls):
    ds, model = mixed_cls
    c = oob_feature_contributions(model, ds)
    p = tmp_path / "c.csv"
    write_contributions_csv(c, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "row_id,feature,class,contribution"
    assert len(lines) - 1 == int(c.defined.sum()) * (ds.n_features + 1) * 3
    first = lines[1].split(",")
    assert first[1] == "bootstrap" and first[2] == "k0"


def test_json_round_trip(tmp_path, mixed_cls):
    ds, model = mixed_cls
    c = oob_feature_contributions(model, ds)
    p = tmp_path / "c.json"
    write_contributions_json(c, p)
    back = read_contributions_json(p)
    assert back.variant == OOB and back.class_labels == c.class_labels
    np.testing.assert_array_equal(back.values, c.values)
    np.testing.assert_array_equal(contributions_from_dict(contributions_to_dict(c)).counts, c.counts)
