"""Acceptance criteria 1-9, one test per criterion.

Each test records a PASS/FAIL (or SKIP) line that is printed in the
"acceptance criteria" section at the end of the pytest run.
"""

import time

import numpy as np
import pytest

from conftest import mixed_dataset, record, record_skip, uci_file
from oracles import all_split_gains, go_left, node_members, path_walk_contributions, split_gain
from test_decompose import mini_forests
from rfcontrib.baselines import centroid, ice_curves, make_grid, partial_dependence, sensitivity_analysis
from rfcontrib.cli import main
from rfcontrib.data import CLASSIFICATION, REGRESSION, Dataset, ToyConfig, bin_target, simulate_toy
from rfcontrib.decompose import feature_contributions, oob_feature_contributions, verify_decomposition
from rfcontrib.forest import TrainConfig, predict, predict_oob, train_forest
from rfcontrib.gov import GovRequest, gov_score
from rfcontrib.repro import CmcStudy, WwqStudy, pd_vs_main_effect_rmse, run_cmc, run_wwq, saddle_agreement
from rfcontrib.visualize import interaction_plot


def _report(criterion, passed, detail):
    record(criterion, passed, detail)
    print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}")
    assert passed, detail


def test_criterion_1_decomposition_exactness(toy_full):
    t0 = time.perf_counter()
    ds = toy_full.dataset
    cls = bin_target(ds, 3)
    worst = {}
    for name, data, task in (("regression", ds, REGRESSION), ("3-class", cls, CLASSIFICATION)):
        model = train_forest(data, TrainConfig(task, n_tree=500, seed=1))
        plain = verify_decomposition(feature_contributions(model, data), predict(model, data))
        oob = verify_decomposition(oob_feature_contributions(model, data), predict_oob(model, data))
        worst[name] = (plain.max_residual, oob.max_residual)
    elapsed = time.perf_counter() - t0
    res = max(max(v) for v in worst.values())
    detail = (", ".join(f"{k}: plain {p:.1e} oob {o:.1e}" for k, (p, o) in worst.items())
              + f"; {elapsed:.0f}s (limit 120s)")
    _report(1, res <= 1e-9 and elapsed < 120, detail)


def test_criterion_2_oracle_equivalence():
    from hypothesis import given, settings
    seen = []

    @settings(max_examples=30, deadline=None, database=None)
    @given(mini_forests())
    def check(forest):
        ds, model = forest
        assert model.n_tree <= 5 and ds.n_rows <= 16 and ds.n_features <= 4
        got = feature_contributions(model, ds).values
        want, _ = path_walk_contributions(model, ds.X)
        got_oob = oob_feature_contributions(model, ds).values
        want_oob, _ = path_walk_contributions(model, ds.X, model.in_bag)
        ok = np.array_equal(got, want) and np.array_equal(got_oob, want_oob, equal_nan=True)
        seen.append(ok)
        assert ok

    try:
        check()
    finally:
        n, good = len(seen), sum(seen)
        record(2, n >= 20 and good == n, f"{good}/{n} random mini forests match the path-walk oracle exactly")
    print(f"criterion 2: PASS  {n} mini forests")
    assert n >= 20


def _realized_split_gaps(ds, model):
    """Largest shortfall of a realized split's gain below the brute-force best, relative to the best."""
    y = np.eye(ds.n_classes)[ds.y]
    worst, n_splits = 0.0, 0
    for j, tree in enumerate(model.trees):
        members = node_members(tree, ds.X, model.in_bag[:, j].astype(float), ds.is_categorical)
        for node in np.nonzero(tree.feature >= 0)[0]:
            w = members[node]
            f = int(tree.feature[node])
            left = np.array([go_left(v, ds.is_categorical[f], tree.threshold[node], tree.cat_mask[node])
                             for v in ds.X[:, f]])
            best = max(all_split_gains(ds.X, y, w, ds.is_categorical))
            got = split_gain(y, w, left)
            worst = max(worst, (best - got) / max(best, 1e-300))
            n_splits += 1
    return worst, n_splits


def test_criterion_3_structural_invariants(toy_full_model, cls3_model):
    out = []
    # weighted-mean node law on regression and classification trees
    law = 0.0
    for ds, model in (toy_full_model, cls3_model):
        y = ds.y[:, None].astype(float) if ds.task == REGRESSION else np.eye(ds.n_classes)[ds.y]
        for j in range(0, model.n_tree, max(1, model.n_tree // 8)):
            tree = model.trees[j]
            members = node_members(tree, ds.X, model.in_bag[:, j].astype(float), ds.is_categorical)
            for node, m in enumerate(members):
                law = max(law, float(np.max(np.abs(tree.value[node] - (m[:, None] * y).sum(0) / m.sum()))))
    out.append(("node law", law, law <= 1e-9))
    # classification increments are zero-sum, probabilities normalized
    ds, model = cls3_model
    inc = max(float(np.max(np.abs((t.value[1:] - t.value[t.parents()[1:]]).sum(axis=1)))) for t in model.trees)
    c = oob_feature_contributions(model, ds)
    inc = max(inc, float(np.max(np.abs(c.values[c.defined].sum(axis=2)))))
    out.append(("zero-sum", inc, inc <= 1e-12))
    norm = max(float(np.max(np.abs(predict(model, ds).sum(axis=1) - 1))),
               max(float(np.max(np.abs(t.value.sum(axis=1) - 1))) for t in model.trees))
    out.append(("normalization", norm, norm <= 1e-12))
    # every realized split maximizes the weighted squared simplex-centre distance (all features are candidates)
    mds = mixed_dataset(160, seed=11, task=CLASSIFICATION)
    mmodel = train_forest(mds, TrainConfig(CLASSIFICATION, n_tree=6, seed=2, mtry=mds.n_features))
    gap, n_splits = _realized_split_gaps(mds, mmodel)
    out.append((f"gini brute force ({n_splits} splits)", gap, gap <= 1e-12))
    frac = float(np.mean(toy_full_model[1].in_bag == 0))
    out.append(("OOB fraction", frac, abs(frac - 0.368) <= 0.02))
    detail = "; ".join(f"{name} {val:.3g}" for name, val, _ in out)
    _report(3, all(ok for *_, ok in out), detail)


TOY_GOV = [("x1|x1", (0,), (0,), ">=", 0.90), ("x2|x2", (1,), (1,), ">=", 0.90),
           ("x3|x3", (2,), (2,), "<=", 0.30), ("x4|x4", (3,), (3,), "<=", 0.30),
           ("x3+x4|x3,x4", (2, 3), (2, 3), ">=", 0.80)]


def test_criterion_4_toy_gov_over_seeds():
    t0 = time.perf_counter()
    failures, lows, highs = [], {}, {}
    for seed in range(1, 6):
        ds = simulate_toy(ToyConfig(n=5000, seed=seed)).dataset
        model = train_forest(ds, TrainConfig(REGRESSION, n_tree=500, seed=seed))
        c = oob_feature_contributions(model, ds)
        for name, feats, ctx, op, bound in TOY_GOV:
            s = gov_score(c, ds, GovRequest(feats, ctx)).score
            lows[name] = min(lows.get(name, 1.0), s)
            highs[name] = max(highs.get(name, 0.0), s)
            if s is None or not (s >= bound if op == ">=" else s <= bound):
                failures.append(f"seed {seed} GOV({name})={s}")
    elapsed = time.perf_counter() - t0
    ranges = ", ".join(f"{n}: {lows[n]:.3f}-{highs[n]:.3f}" for n, *_ in TOY_GOV)
    detail = f"{ranges}; {elapsed:.0f}s (limit 180s)" + (f"; failed {failures}" if failures else "")
    _report(4, not failures and elapsed < 180, detail)


def test_criterion_5_saddle(toy_full_model, toy_full_oob):
    ds, _ = toy_full_model
    agree = saddle_agreement(interaction_plot(toy_full_oob, ds, ("x3", "x4"), "sum"))
    _report(5, agree >= 0.85, f"sign agreement {agree:.3f} (>= 0.85)")


def _uci_checks(criterion, result, prefixes):
    checks = [c for c in result.checks if c.name.startswith(prefixes)]
    detail = "; ".join(f"{c.name} {c.value}" for c in checks)
    _report(criterion, bool(checks) and all(c.passed for c in checks), detail)


def test_criterion_6_wwq(tmp_path):
    path = uci_file("winequality-white.csv")
    if path is None:
        record_skip(6, "winequality-white.csv not found under $RFCONTRIB_DATA_DIR")
        pytest.skip("wwq data file not available")
    result = run_wwq(path, tmp_path, WwqStudy())
    _uci_checks(6, result, ("OOB explained variance", "OOB mean absolute error", "GOV(volatile acidity"))


def test_criterion_7_cmc(tmp_path):
    path = uci_file("cmc.data")
    if path is None:
        record_skip(7, "cmc.data not found under $RFCONTRIB_DATA_DIR")
        pytest.skip("cmc data file not available")
    result = run_cmc(path, tmp_path, CmcStudy())
    _uci_checks(7, result, ("OOB error rate", "majority-class error rate", "size-weighted mean displacement"))


def test_criterion_8_baselines(toy_full_model, toy_full_oob):
    ds, model = toy_full_model
    grid = make_grid(ds, [1], resolution=25)
    ice = ice_curves(model, ds, grid)
    pd = partial_dependence(model, ds, grid)
    pd_exact = np.array_equal(pd.values, ice.values.mean(axis=0))
    one = Dataset(ds.schema, centroid(ds)[None, :], ds.y[:1])
    sa_exact = np.array_equal(sensitivity_analysis(model, ds, grid).values, ice_curves(model, one, grid).values[0])
    rows = toy_full_oob.defined
    rmse = pd_vs_main_effect_rmse(pd.values[:, 0], grid.grids[0], ds.X[rows, 1], toy_full_oob.feature(1)[rows, 0])
    _report(8, pd_exact and sa_exact and rmse < 0.1,
            f"PD == mean(ICE): {pd_exact}; SA == centroid ICE: {sa_exact}; centred PD(x2) RMSE {rmse:.4f} (< 0.1)")


def test_criterion_9_determinism(tmp_path):
    outs = [tmp_path / "a", tmp_path / "b"]
    for d in outs:
        main(["repro", "toy", "--outdir", str(d)])
    files = [sorted(p.relative_to(d).as_posix() for p in d.rglob("*") if p.is_file()) for d in outs]
    same_names = files[0] == files[1]
    differing = [f for f in files[0] if (outs[0] / f).read_bytes() != (outs[1] / f).read_bytes()] if same_names else []
    kinds = {ext: sum(f.endswith(ext) for f in files[0]) for ext in (".svg", ".csv", ".json")}
    _report(9, same_names and not differing and kinds[".svg"] >= 8 and "manifest.json" in files[0],
            f"{len(files[0])} files ({kinds}) byte-identical across two runs"
            + (f"; differing: {differing}" if differing else ""))
