from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import pytest

from rfcontrib.data import FeatureSpec, Schema, CATEGORICAL, CLASSIFICATION, REGRESSION, Dataset, ToyConfig
from rfcontrib.data import bin_target, simulate_toy
from rfcontrib.forest import TrainConfig, train_forest

# acceptance criterion -> (status, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[str, str]] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = ("PASS" if passed else "FAIL", detail)


def record_skip(criterion: int, detail: str) -> None:
    ACCEPTANCE[criterion] = ("SKIP", detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[crit]
        terminalreporter.write_line(f"criterion {crit}: {status}  {detail}")


def uci_file(name: str) -> Path | None:
    """Locate a UCI data file under $RFCONTRIB_DATA_DIR (or ./data)."""
    base = Path(os.environ.get("RFCONTRIB_DATA_DIR", "data"))
    p = base / name
    return p if p.is_file() else None


# --- small synthetic datasets -----------------------------------------------

def mixed_dataset(n: int = 120, seed: int = 0, task: str = REGRESSION, n_classes: int = 3) -> Dataset:
    """Two numeric features, one 4-level categorical, one binary categorical."""
    rng = np.random.default_rng(seed)
    x1 = rng.uniform(-1, 1, n)
    x2 = rng.integers(0, 5, n).astype(float)
    c1 = rng.integers(1, 5, n).astype(float)
    c2 = rng.integers(1, 3, n).astype(float)
    X = np.column_stack([x1, x2, c1, c2])
    signal = x1 ** 2 + 0.3 * x2 + np.where(c1 >= 3, 0.5, -0.5) + 0.4 * (c2 == 2)
    features = (FeatureSpec("a"), FeatureSpec("b"), FeatureSpec("cat4", CATEGORICAL, ("p", "q", "r", "s")),
                FeatureSpec("bin", CATEGORICAL, ("no", "yes")))
    if task == REGRESSION:
        y = signal + 0.2 * rng.standard_normal(n)
        return Dataset(Schema(features, "y", REGRESSION), X, y)
    edges = np.quantile(signal, np.linspace(0, 1, n_classes + 1)[1:-1])
    y = np.searchsorted(edges, signal + 0.3 * rng.standard_normal(n))
    classes = tuple(f"k{c}" for c in range(n_classes))
    return Dataset(Schema(features, "y", CLASSIFICATION, classes), X, y)


@pytest.fixture(scope="session")
def toy_small():
    return simulate_toy(ToyConfig(n=600, seed=3))


@pytest.fixture(scope="session")
def reg_model(toy_small):
    ds = toy_small.dataset
    return ds, train_forest(ds, TrainConfig(REGRESSION, n_tree=60, seed=5))


@pytest.fixture(scope="session")
def cls3_model(toy_small):
    ds = bin_target(toy_small.dataset, 3)
    return ds, train_forest(ds, TrainConfig(CLASSIFICATION, n_tree=60, seed=6))


@pytest.fixture(scope="session")
def mixed_reg():
    ds = mixed_dataset(200, seed=1)
    return ds, train_forest(ds, TrainConfig(REGRESSION, n_tree=40, seed=2))


@pytest.fixture(scope="session")
def mixed_cls():
    ds = mixed_dataset(240, seed=2, task=CLASSIFICATION)
    return ds, train_forest(ds, TrainConfig(CLASSIFICATION, n_tree=40, seed=3))


# --- full-size toy (acceptance) ---------------------------------------------

@pytest.fixture(scope="session")
def toy_full():
    return simulate_toy(ToyConfig(n=5000, seed=1))


@pytest.fixture(scope="session")
def toy_full_model(toy_full):
    ds = toy_full.dataset
    return ds, train_forest(ds, TrainConfig(REGRESSION, n_tree=500, seed=1))


@pytest.fixture(scope="session")
def toy_full_oob(toy_full_model):
    from rfcontrib.decompose import oob_feature_contributions
    ds, model = toy_full_model
    return oob_feature_contributions(model, ds)
