"""End-to-end studies: simulated toy regression, white wine quality, contraceptive method choice.

Each study trains a forest, decomposes it, scores the plots with GOV, renders
the figures and writes ``checks.json`` plus a run manifest. A study passes
when every embedded check passes.
"""

from __future__ import annotations

import json
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import visualize as V
from .baselines import ice_curves, make_grid, pd_from_ice, sensitivity_analysis
from .data import CLASSIFICATION, CMC_BINARY, REGRESSION, Dataset, ToyConfig, load_cmc, load_wwq, simulate_toy, write_csv
from .decompose import (
    feature_contributions,
    oob_feature_contributions,
    subgroup_balance,
    verify_decomposition,
    write_contributions_csv,
)
from .forest import ForestModel, TrainConfig, oob_error, predict, predict_oob, train_forest
from .gov import GovRequest, format_table, gov_score, knn_estimate, main_effect_gov_all, write_reports_json
from .manifest import RunManifest
from .persist import save_model

DECOMPOSITION_TOL = 1e-9


@dataclass
class Check:
    name: str
    value: float | None
    target: str
    passed: bool

    def __str__(self) -> str:
        val = "undefined" if self.value is None else f"{self.value:.6g}"
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {val} (target {self.target})"


def at_least(name: str, value: float | None, bound: float) -> Check:
    return Check(name, value, f">= {bound}", value is not None and value >= bound)


def at_most(name: str, value: float | None, bound: float) -> Check:
    return Check(name, value, f"<= {bound}", value is not None and value <= bound)


def within(name: str, value: float | None, center: float, tol: float) -> Check:
    return Check(name, value, f"{center} +/- {tol}", value is not None and abs(value - center) <= tol)


@dataclass
class ReproResult:
    study: str
    outdir: Path
    checks: list[Check]
    metrics: dict
    files: list[Path]
    manifest: Path | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]


class _Run:
    """Collects checks, files and optional stage timings while a study runs."""

    def __init__(self, study: str, outdir: str | Path, timings: bool):
        self.study = study
        self.outdir = Path(outdir)
        self.outdir.mkdir(parents=True, exist_ok=True)
        (self.outdir / "plots").mkdir(exist_ok=True)
        self.checks: list[Check] = []
        self.metrics: dict = {}
        self.files: list[Path] = []
        self.plots: list[dict] = []
        self.timings: dict[str, float] | None = {} if timings else None

    @contextmanager
    def stage(self, name: str):
        t0 = time.perf_counter()
        yield
        if self.timings is not None:
            self.timings[name] = time.perf_counter() - t0

    def path(self, name: str) -> Path:
        p = self.outdir / name
        self.files.append(p)
        return p

    def plot(self, bundles, prefix: str) -> list[V.PlotBundle]:
        entries = V.write_plot_set(bundles, self.outdir / "plots", prefix)
        for e in entries:
            self.files += [self.outdir / "plots" / e["svg"], self.outdir / "plots" / e["csv"]]
        self.plots += entries
        return bundles

    def decompose(self, model: ForestModel, ds: Dataset, threads):
        plain = feature_contributions(model, ds.X, threads)
        oob = oob_feature_contributions(model, ds, threads)
        rep_plain = verify_decomposition(plain, predict(model, ds.X, threads))
        rep_oob = verify_decomposition(oob, predict_oob(model, ds, threads))
        self.checks += [at_most("decomposition residual (plain)", rep_plain.max_residual, DECOMPOSITION_TOL),
                        at_most("decomposition residual (oob)", rep_oob.max_residual, DECOMPOSITION_TOL)]
        self.metrics["oob_rows_undefined"] = rep_oob.rows_undefined
        write_contributions_csv(oob, self.path("contributions_oob.csv"), ds.row_ids)
        return plain, oob

    def finish(self, config: dict, seed: int, inputs=()) -> ReproResult:
        V.write_plot_manifest(self.plots, self.path("plots.json"))
        doc = {"study": self.study, "passed": all(c.passed for c in self.checks),
               "checks": [asdict(c) for c in self.checks], "metrics": self.metrics}
        self.path("checks.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
        man = RunManifest(f"repro {self.study}", config, seed, timings=self.timings)
        for p in inputs:
            man.add_input(p)
        man.add_outputs(self.files, self.outdir)
        mpath = man.write(self.outdir / "manifest.json")
        return ReproResult(self.study, self.outdir, self.checks, self.metrics, self.files, mpath)


def _gov_tables(run: _Run, reports) -> None:
    run.path("gov_table.txt").write_text(format_table(reports) + "\n", encoding="utf-8")
    write_reports_json(reports, run.path("gov.json"))


# --- toy --------------------------------------------------------------------

@dataclass(frozen=True)
class ToyStudy:
    seed: int = 1
    n: int = 5000
    n_tree: int = 500
    grid_points: int = 25
    color_by: str = "x3"
    save_model: bool = False


def saddle_agreement(bundle: V.PlotBundle, min_abs: float = 0.25) -> float:
    """Share of points with |x*y| > min_abs whose z has the sign of x*y."""
    p = bundle.points
    prod = p["x"] * p["y"]
    sel = np.abs(prod) > min_abs
    return float(np.mean(np.sign(p["z"][sel]) == np.sign(prod[sel]))) if sel.any() else float("nan")


def pd_vs_main_effect_rmse(pd_values: np.ndarray, grid: np.ndarray, feature_values: np.ndarray,
                           contributions: np.ndarray, k: int | None = None) -> float:
    """RMSE between a mean-centred PD curve and the mean-centred GOV estimate of a main-effect curve on the same grid."""
    mu, sd = feature_values.mean(), feature_values.std()
    curve = knn_estimate((feature_values - mu) / sd, contributions, (grid - mu) / sd, k)
    a = pd_values - pd_values.mean()
    b = curve - curve.mean()
    return float(np.sqrt(np.mean((a - b) ** 2)))


def run_toy(outdir: str | Path, study: ToyStudy = ToyStudy(), threads: int | None = None,
            timings: bool = False) -> ReproResult:
    run = _Run("toy", outdir, timings)
    with run.stage("simulate"):
        sim = simulate_toy(ToyConfig(n=study.n, seed=study.seed))
        ds = sim.dataset
        write_csv(ds, run.path("data.csv"))
        run.metrics["realized_cor_signal_y"] = float(np.corrcoef(sim.signal, ds.y)[0, 1])
        run.metrics["noise_scale"] = sim.noise_scale
    cfg = TrainConfig(REGRESSION, n_tree=study.n_tree, seed=study.seed)
    with run.stage("train"):
        model = train_forest(ds, cfg, threads)
        if study.save_model:
            save_model(model, run.path("model.json"))
        run.metrics.update(oob_error(model, ds, threads))
    with run.stage("decompose"):
        _, oob = run.decompose(model, ds, threads)
    with run.stage("gov"):
        reports = main_effect_gov_all(oob, ds)
        reports.append(gov_score(oob, ds, GovRequest((2, 3), (2, 3))))
        reports.append(gov_score(oob, ds, GovRequest((2,), (2, 3))))
        _gov_tables(run, reports)
        run.checks += [
            at_least("GOV(x1|x1)", reports[0].score, 0.90),
            at_least("GOV(x2|x2)", reports[1].score, 0.90),
            at_most("GOV(x3|x3)", reports[2].score, 0.30),
            at_most("GOV(x4|x4)", reports[3].score, 0.30),
            at_least("GOV(x3+x4|x3,x4)", reports[6].score, 0.80),
        ]
    with run.stage("plots"):
        grad = V.feature_gradient(ds, study.color_by)
        run.plot(V.main_effect_plots(oob, ds, gradient=grad), "main")
        inter = V.interaction_plot(oob, ds, ("x3", "x4"), "sum", grad)
        run.plot([inter, V.interaction_plot(oob, ds, ("x3", "x4"), "single", grad)], "interaction")
        run.checks.append(at_least("saddle sign agreement (x3,x4)", saddle_agreement(inter), 0.85))
    with run.stage("baselines"):
        g2 = make_grid(ds, [1], study.grid_points)
        ice = ice_curves(model, ds, g2, threads=threads)
        pd = pd_from_ice(ice)
        sa = sensitivity_analysis(model, ds, make_grid(ds, [0], study.grid_points), threads)
        pd.write_csv(run.path("pd_x2.csv"))
        ice.write_csv(run.path("ice_x2.csv"))
        sa.write_csv(run.path("sa_x1.csv"))
        run.plot([V.curve_plot(pd), V.curve_plot(ice), V.curve_plot(sa)], "baseline")
        rmse = pd_vs_main_effect_rmse(pd.values[:, 0], g2.grids[0], ds.X[:, 1], oob.feature(1)[:, 0])
        run.checks.append(at_most("centred PD(x2) vs main-effect curve RMSE", rmse, 0.1))
    return run.finish({"study": asdict(study), "train": cfg.resolve(ds.n_rows, ds.n_features).to_dict()},
                      study.seed)


# --- white wine quality -----------------------------------------------------

WWQ_VOLATILE = "volatile acidity"
WWQ_ALCOHOL = "alcohol"
WWQ_PCA = ("residual sugar", "density", "alcohol")


@dataclass(frozen=True)
class WwqStudy:
    seed: int = 1
    n_tree: int = 500
    color_by: str = WWQ_ALCOHOL
    save_model: bool = False


def run_wwq(data: str | Path, outdir: str | Path, study: WwqStudy = WwqStudy(), threads: int | None = None,
            timings: bool = False) -> ReproResult:
    run = _Run("wwq", outdir, timings)
    ds = load_wwq(data)
    cfg = TrainConfig(REGRESSION, n_tree=study.n_tree, seed=study.seed)
    with run.stage("train"):
        model = train_forest(ds, cfg, threads)
        if study.save_model:
            save_model(model, run.path("model.json"))
        err = oob_error(model, ds, threads)
        run.metrics.update(err)
        run.checks += [within("OOB explained variance", err["explained_variance"], 0.56, 0.05),
                       within("OOB mean absolute error", err["mae"], 0.42, 0.05)]
    with run.stage("decompose"):
        _, oob = run.decompose(model, ds, threads)
    with run.stage("gov"):
        va, alc = ds.schema.index(WWQ_VOLATILE), ds.schema.index(WWQ_ALCOHOL)
        reports = main_effect_gov_all(oob, ds)
        inter = gov_score(oob, ds, GovRequest((va,), (va, alc)))
        reports.append(inter)
        _gov_tables(run, reports)
        run.checks.append(at_least(f"GOV({WWQ_VOLATILE}|{WWQ_VOLATILE},{WWQ_ALCOHOL})", inter.score, 0.85))
        res = V.pca(ds.X[:, [ds.schema.index(f) for f in WWQ_PCA]], 2)
        run.checks.append(at_least("PCA top-2 variance share (residual sugar, density, alcohol)",
                                   float(res.explained_ratio.sum()), 0.95))
    with run.stage("plots"):
        grad = V.feature_gradient(ds, study.color_by)
        run.plot(V.main_effect_plots(oob, ds, gradient=grad), "main")
        run.plot([V.interaction_plot(oob, ds, (WWQ_VOLATILE, WWQ_ALCOHOL), "single", grad)], "interaction")
    return run.finish({"study": asdict(study), "train": cfg.resolve(ds.n_rows, ds.n_features).to_dict()},
                      study.seed, [data])


# --- contraceptive method choice --------------------------------------------

CMC_NO_USE = "1"


@dataclass(frozen=True)
class CmcStudy:
    seed: int = 1
    n_tree: int = 500
    sample_size: int = 100
    mtry: int = 2
    save_model: bool = False


def majority_error(ds: Dataset) -> float:
    counts = ds.class_counts()
    return float(1 - counts.max() / counts.sum())


def run_cmc(data: str | Path, outdir: str | Path, study: CmcStudy = CmcStudy(), threads: int | None = None,
            timings: bool = False) -> ReproResult:
    run = _Run("cmc", outdir, timings)
    ds = load_cmc(data)
    cfg = TrainConfig(CLASSIFICATION, n_tree=study.n_tree, mtry=study.mtry, sample_size=study.sample_size,
                      seed=study.seed)
    with run.stage("train"):
        model = train_forest(ds, cfg, threads)
        if study.save_model:
            save_model(model, run.path("model.json"))
        err = oob_error(model, ds, threads)
        run.metrics.update(err)
        run.checks += [within("OOB error rate", err["error_rate"], 0.44, 0.03),
                       within("majority-class error rate", majority_error(ds), 0.573, 0.0005)]
    with run.stage("decompose"):
        _, oob = run.decompose(model, ds, threads)
        for name in CMC_BINARY:
            bal = subgroup_balance(model, ds, name, threads)
            run.checks.append(at_most(f"size-weighted mean displacement ({name})", bal.residual, 1e-9))
            run.checks.append(Check(f"smaller subgroup moves more ({name})", None, "true", bal.smaller_moves_more()))
    with run.stage("gov"):
        reports = main_effect_gov_all(oob, ds)
        _gov_tables(run, reports)
    with run.stage("plots"):
        oobp = predict_oob(model, ds, threads)
        run.plot([V.prediction_simplex(oobp, oob, ds), V.prediction_simplex(oobp, oob, ds, V.pca_gradient(ds))],
                 "prediction")
        order = [int(j) for j in np.argsort(-oob.variances(), kind="stable")]
        pairs = []
        for j in order:
            pairs += V.simplex_pair(oob, ds, j, with_gov=True)
        run.plot(pairs, "simplex")
        aligned = [V.aligned_class_plot(oob, ds, j) for j in order]
        run.plot(aligned, "aligned")
        nc = ds.schema.index("n_children")
        k = ds.schema.classes.index(CMC_NO_USE)
        rows = oob.defined & (ds.X[:, nc] <= 1)
        band = float(np.max(oob.feature(nc)[rows, k])) if rows.any() else None
        run.checks.append(at_least("n_children <= 1: max no-use contribution", band, 0.15))
    return run.finish({"study": asdict(study), "train": cfg.resolve(ds.n_rows, ds.n_features).to_dict()},
                      study.seed, [data])


STUDIES = ("toy", "wwq", "cmc")
