import math

import numpy as np
import pytest

from rfcontrib.data import (
    CATEGORICAL, CLASSIFICATION, CMC_BINARY, REGRESSION, FeatureSpec, Schema, Dataset, ToyConfig, bin_target,
    from_columns, load_cmc, load_csv, load_wwq, simulate_toy, solve_noise_scale, toy_signal, write_csv,
)
from rfcontrib.errors import ConfigError, DataError, DegenerateError, SchemaError, UnseenLevelError


def test_toy_signal_examples():
    X = np.array([[0, 0, 0, 0, 0.3, 0.9], [1, 0.25, 1, 1, -0.2, 0.1]], dtype=float)
    np.testing.assert_allclose(toy_signal(X), [0.0, 2.5], atol=1e-15)


def test_toy_realized_correlation():
    sim = simulate_toy(ToyConfig(n=5000, seed=1))
    assert abs(np.corrcoef(sim.signal, sim.dataset.y)[0, 1] - 0.75) <= 0.001
    ds = sim.dataset
    assert ds.names == ["x1", "x2", "x3", "x4", "x5", "x6"]
    assert ds.X.min() >= -1 and ds.X.max() <= 1


def test_toy_is_deterministic_per_seed():
    a = simulate_toy(ToyConfig(n=200, seed=9)).dataset
    b = simulate_toy(ToyConfig(n=200, seed=9)).dataset
    c = simulate_toy(ToyConfig(n=200, seed=10)).dataset
    assert a.digest() == b.digest() != c.digest()


def test_sinehill_generator():
    sim = simulate_toy(ToyConfig(n=500, seed=2, generator="sinehill"))
    X = sim.dataset.X
    assert X.shape == (500, 2) and X.min() >= 0 and X.max() <= 2 * math.pi
    np.testing.assert_allclose(sim.signal, np.sin(X[:, 0]) ** 8 * np.sin(X[:, 1]) ** 8)


@pytest.mark.parametrize("kw", [dict(rho=0), dict(rho=1.2), dict(n=5), dict(generator="nope")])
def test_toy_config_validation(kw):
    with pytest.raises(ConfigError):
        ToyConfig(**kw)


def test_noise_scale_degenerate_signal():
    with pytest.raises(DegenerateError):
        solve_noise_scale(np.ones(50), np.random.default_rng(0).standard_normal(50), 0.5)


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_load_csv_types_and_level_order(tmp_path):
    p = _write(tmp_path, "num,col,y\n1.5,red,3\n2,blue,4\n-1,red,5\n0,green,6\n")
    ds = load_csv(p, "y")
    assert ds.task == REGRESSION
    spec = ds.schema.features[1]
    assert spec.kind == CATEGORICAL and spec.levels == ("red", "blue", "green")
    np.testing.assert_array_equal(ds.X[:, 1], [1, 2, 1, 3])
    np.testing.assert_array_equal(ds.y, [3, 4, 5, 6])


def test_load_csv_classification_classes_sorted_numerically(tmp_path):
    p = _write(tmp_path, "a,y\n1,10\n2,9\n3,10\n4,2\n")
    ds = load_csv(p, "y", task=CLASSIFICATION)
    assert ds.schema.classes == ("2", "9", "10")
    np.testing.assert_array_equal(ds.y, [2, 1, 2, 0])


@pytest.mark.parametrize("text,match", [
    ("a,b,y\n1,2,3\n1,2\n", ":3: expected 3 fields"),
    ("a,b,y\n1,NA,3\n", ":2: missing value in column 'b'"),
    ("a,b,y\n1,2,\n", ":2: missing value in column 'y'"),
    ("a,b,y\n", "no data rows"),
])
def test_load_csv_errors_name_the_line(tmp_path, text, match):
    with pytest.raises(DataError, match=match):
        load_csv(_write(tmp_path, text), "y")


def test_load_csv_unknown_target(tmp_path):
    with pytest.raises((DataError, SchemaError)):
        load_csv(_write(tmp_path, "a,b\n1,2\n"), "y")


def test_schema_rejects_unseen_level(tmp_path):
    train = load_csv(_write(tmp_path, "c,y\nx,1\ny,2\nx,3\n"), "y")
    with pytest.raises(UnseenLevelError, match="row 1: column 'c' has level 'z'"):
        load_csv(_write(tmp_path, "c,y\nx,1\nz,2\n", "q.csv"), "y", schema=train.schema)


def test_write_then_load_round_trip(tmp_path):
    ds = from_columns({"a": ["0.1", "0.2", "0.3"], "c": ["u", "v", "u"], "y": ["k1", "k2", "k1"]}, "y",
                      task=CLASSIFICATION)
    write_csv(ds, tmp_path / "o.csv")
    back = load_csv(tmp_path / "o.csv", "y", task=CLASSIFICATION)
    np.testing.assert_array_equal(back.X, ds.X)
    np.testing.assert_array_equal(back.y, ds.y)
    assert back.schema == ds.schema


def test_dataset_validates_codes():
    schema = Schema((FeatureSpec("c", CATEGORICAL, ("a", "b")),), "y", REGRESSION)
    with pytest.raises(DataError):
        Dataset(schema, np.array([[3.0]]), np.array([1.0]))
    with pytest.raises(DataError):
        Dataset(schema, np.array([[np.nan]]), np.array([1.0]))


def test_cmc_loader_shape(tmp_path):
    rng = np.random.default_rng(0)
    lines = []
    for _ in range(30):
        row = [rng.integers(16, 50), rng.integers(1, 5), rng.integers(1, 5), rng.integers(0, 8), rng.integers(0, 2),
               rng.integers(0, 2), rng.integers(1, 5), rng.integers(1, 5), rng.integers(0, 2), rng.integers(1, 4)]
        lines.append(",".join(str(v) for v in row))
    ds = load_cmc(_write(tmp_path, "\n".join(lines) + "\n", "cmc.data"))
    assert ds.n_rows == 30 and ds.n_features == 9 and ds.task == CLASSIFICATION
    cats = {f.name for f in ds.schema.features if f.is_categorical}
    assert cats == set(CMC_BINARY)


def test_wwq_loader_semicolons(tmp_path):
    header = '"fixed acidity";"volatile acidity";"alcohol";"quality"'
    p = _write(tmp_path, header + "\n7;0.27;8.8;6\n6.3;0.3;9.5;5\n", "wwq.csv")
    ds = load_wwq(p)
    assert ds.names == ["fixed acidity", "volatile acidity", "alcohol"]
    assert ds.task == REGRESSION
    np.testing.assert_array_equal(ds.y, [6, 5])


def test_bin_target_balanced():
    ds = bin_target(simulate_toy(ToyConfig(n=900, seed=1)).dataset, 3)
    assert ds.schema.classes == ("bin1", "bin2", "bin3")
    np.testing.assert_array_equal(ds.class_counts(), [300, 300, 300])
