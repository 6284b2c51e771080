"""Command-line interface.

Exit codes: 0 success, 1 a check failed, 2 usage error, 3 input/output error.
Every command that writes files also writes a manifest JSON beside them.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from . import visualize as V
from .baselines import ice_curves, make_grid, partial_dependence, sensitivity_analysis
from .data import CLASSIFICATION, REGRESSION, Dataset, ToyConfig, load_csv, simulate_toy, write_csv
from .decompose import (
    feature_contributions,
    oob_feature_contributions,
    verify_decomposition,
    write_contributions_csv,
    write_contributions_json,
)
from .errors import (
    ConfigError,
    DataError,
    DegenerateError,
    ModelFormatError,
    RFContribError,
    SchemaError,
    UnseenLevelError,
)
from .forest import ForestModel, TrainConfig, predict, predict_oob, train_forest
from .gov import GovRequest, class_weighted_gov, format_table, gov_score, main_effect_gov_all, write_reports_json
from .manifest import RunManifest, manifest_path_for
from .persist import load_model, save_model
from .repro import CmcStudy, ToyStudy, WwqStudy, run_cmc, run_toy, run_wwq

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


# --- argument helpers -------------------------------------------------------

def _csv_list(text: str | None) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()] if text else []


def parse_stratify(text: str, classes: tuple[str, ...]) -> tuple[int, ...]:
    """``c1:n1,c2:n2,...`` -> per-class counts in schema class order (unlisted classes draw 0)."""
    counts = dict.fromkeys(classes, 0)
    for item in _csv_list(text):
        label, sep, n = item.rpartition(":")
        if not sep:
            raise UsageError(f"--stratify entries look like class:count, got {item!r}")
        if label not in counts:
            raise UsageError(f"--stratify names unknown class {label!r}; classes are {', '.join(classes)}")
        try:
            counts[label] = int(n)
        except ValueError:
            raise UsageError(f"--stratify count for {label!r} is not an integer: {n!r}") from None
    return tuple(counts[c] for c in classes)


def _sniff_delimiter(path: Path) -> str:
    with path.open(encoding="utf-8") as fh:
        first = fh.readline()
    return ";" if first.count(";") > first.count(",") else ","


def _load_for_model(model: ForestModel, path: str, delimiter: str | None) -> Dataset:
    p = Path(path)
    return load_csv(p, model.schema.target, model.schema.task, delimiter=delimiter or _sniff_delimiter(p),
                    schema=model.schema)


def _gradient(spec: str | None, dataset: Dataset, mapping: str) -> V.ColorGradient | None:
    if not spec:
        return None
    if spec == "pca":
        return V.pca_gradient(dataset)
    if spec == "class":
        return V.class_gradient(dataset)
    kind, _, name = spec.partition(":")
    if kind != "feature" or not name:
        raise UsageError(f"--color-by takes feature:NAME, pca or class, got {spec!r}")
    return V.feature_gradient(dataset, name, mapping)


def _class_index(model: ForestModel, label: str | None) -> int | None:
    if model.task != CLASSIFICATION:
        return None
    if label is None:
        return 0
    if label not in model.schema.classes:
        raise UsageError(f"unknown class {label!r}; classes are {', '.join(model.schema.classes)}")
    return model.schema.classes.index(label)


def _contributions(model: ForestModel, dataset: Dataset, plain: bool, threads):
    if plain:
        return feature_contributions(model, dataset.X, threads)
    return oob_feature_contributions(model, dataset, threads)


def _manifest(args, command: str, config: dict, inputs, outputs, base: Path, path: Path) -> None:
    man = RunManifest(command, config, getattr(args, "seed", None))
    for p in inputs:
        man.add_input(p)
    man.add_outputs(outputs, base)
    man.write(path)


# --- commands ---------------------------------------------------------------

def cmd_simulate(args) -> int:
    sim = simulate_toy(ToyConfig(n=args.n, seed=args.seed, rho=args.rho, generator=args.generator))
    out = Path(args.out)
    extra = {"signal": sim.signal.tolist()} if args.with_signal else None
    write_csv(sim.dataset, out, extra)
    config = {"generator": args.generator, "n": args.n, "rho": args.rho, "noise_scale": sim.noise_scale,
              "with_signal": args.with_signal}
    _manifest(args, "simulate", config, [], [out], out.parent, manifest_path_for(out))
    print(f"wrote {sim.dataset.n_rows} rows to {out} (noise scale {sim.noise_scale:.6g})")
    return EXIT_OK


def cmd_train(args) -> int:
    data = Path(args.data)
    ds = load_csv(data, args.target, args.task, categorical=_csv_list(args.categorical),
                  delimiter=args.delimiter or _sniff_delimiter(data))
    stratify = parse_stratify(args.stratify, ds.schema.classes) if args.stratify else None
    cfg = TrainConfig(ds.task, n_tree=args.ntree, mtry=args.mtry, sample_size=args.sampsize,
                      replace=args.replace, stratify=stratify, min_node_size=args.min_node, seed=args.seed)
    model = train_forest(ds, cfg, args.threads)
    out = save_model(model, args.out)
    _manifest(args, "train", model.config.to_dict(), [data], [out], out.parent, manifest_path_for(out))
    print(f"trained {model.n_tree} trees on {ds.n_rows} rows x {ds.n_features} features -> {out}")
    return EXIT_OK


def cmd_decompose(args) -> int:
    model = load_model(args.model)
    ds = _load_for_model(model, args.data, args.delimiter)
    if args.oob:
        contrib = oob_feature_contributions(model, ds, args.threads)
        report = verify_decomposition(contrib, predict_oob(model, ds, args.threads), args.tolerance)
    else:
        contrib = feature_contributions(model, ds.X, args.threads)
        report = verify_decomposition(contrib, predict(model, ds.X, args.threads), args.tolerance)
    out = Path(args.out)
    if out.suffix == ".json":
        write_contributions_json(contrib, out)
    else:
        write_contributions_csv(contrib, out, ds.row_ids)
    _manifest(args, "decompose", {"variant": contrib.variant, "tolerance": args.tolerance},
              [args.model, args.data], [out], out.parent, manifest_path_for(out))
    print(f"max residual {report.max_residual:.3e}")
    print(report)
    return EXIT_OK if report.passed else EXIT_CHECK


def cmd_gov(args) -> int:
    model = load_model(args.model)
    ds = _load_for_model(model, args.data, args.delimiter)
    contrib = _contributions(model, ds, args.plain, args.threads)
    feats = [ds.schema.index(f) for f in _csv_list(args.feature)]
    ctx = [ds.schema.index(f) for f in _csv_list(args.context)] or feats
    if not feats:
        if args.context:
            raise UsageError("--context needs --feature")
        reports = main_effect_gov_all(contrib, ds, args.k)
    elif model.task == CLASSIFICATION and args.cls is None:
        reports = [class_weighted_gov(contrib, ds, feats, ctx, args.k)]
    else:
        req = GovRequest(tuple(feats), tuple(ctx), _class_index(model, args.cls), args.k)
        reports = [gov_score(contrib, ds, req)]
    print(format_table(reports))
    if args.out:
        out = Path(args.out)
        write_reports_json(reports, out)
        _manifest(args, "gov", {"feature": feats, "context": ctx, "k": args.k, "class": args.cls,
                                "variant": contrib.variant}, [args.model, args.data], [out], out.parent,
                  manifest_path_for(out))
    return EXIT_OK


def _features(ds: Dataset, text: str | None) -> list[int] | None:
    names = _csv_list(text)
    return [ds.schema.index(f) for f in names] if names else None


def cmd_plot(args) -> int:
    model = load_model(args.model)
    ds = _load_for_model(model, args.data, args.delimiter)
    contrib = _contributions(model, ds, args.plain, args.threads)
    grad = _gradient(args.color_by, ds, args.mapping)
    feats = _features(ds, args.feature)
    cls = _class_index(model, args.cls)
    with_gov = not args.no_gov
    kind = args.plot
    if kind == "main":
        bundles = V.main_effect_plots(contrib, ds, feats, grad, with_gov, cls, args.k)
    elif kind == "interact":
        if not feats or len(feats) != 2:
            raise UsageError("plot interact needs --feature A,B")
        bundles = [V.interaction_plot(contrib, ds, tuple(feats), args.response, grad, with_gov, cls, args.k)]
    elif kind == "simplex":
        if model.n_outputs != 3:
            raise ConfigError(f"simplex plots support exactly 3 classes, got {model.n_outputs}")
        oobp = predict_oob(model, ds, args.threads)
        bundles = [V.prediction_simplex(oobp, contrib, ds, grad)]
        for j in feats if feats is not None else range(ds.n_features):
            bundles += V.simplex_pair(contrib, ds, j, grad if grad and grad.source != "class" else None, with_gov)
    else:
        if model.task != CLASSIFICATION:
            raise ConfigError("aligned class plots need a classification model")
        bundles = [V.aligned_class_plot(contrib, ds, j) for j in (feats or range(ds.n_features))]
    outdir = Path(args.outdir)
    entries = V.write_plot_set(bundles, outdir, kind, dims=(args.width, args.height), azim=args.azim,
                               elev=args.elev)
    V.write_plot_manifest(entries, outdir / f"{kind}_plots.json")
    files = [outdir / f"{kind}_plots.json"] + [outdir / e[x] for e in entries for x in ("svg", "csv")]
    config = {"plot": kind, "color_by": args.color_by, "mapping": args.mapping, "feature": args.feature,
              "class": args.cls, "gov": with_gov, "k": args.k, "variant": contrib.variant,
              "azim": args.azim, "elev": args.elev, "dims": [args.width, args.height]}
    _manifest(args, f"plot {kind}", config, [args.model, args.data], files, outdir,
              outdir / f"{kind}_manifest.json")
    for e in entries:
        gov = "" if e["gov"] is None else f"  GOV {e['gov']:.3f}"
        print(f"{e['svg']}  {e['points']} points{gov}")
    return EXIT_OK


def cmd_baseline(args) -> int:
    model = load_model(args.model)
    ds = _load_for_model(model, args.data, args.delimiter)
    feats = _features(ds, args.feature)
    if not feats:
        raise UsageError("baseline needs --feature")
    grid = make_grid(ds, feats, args.resolution)
    if args.kind == "sa":
        table = sensitivity_analysis(model, ds, grid, args.threads)
    elif args.kind == "pd":
        table = partial_dependence(model, ds, grid, args.threads)
    else:
        table = ice_curves(model, ds, grid, args.centered, args.threads)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    stem = f"{args.kind}_{V.export.slug('_'.join(ds.names[f] for f in feats))}"
    files = [outdir / f"{stem}.csv"]
    table.write_csv(files[0])
    if len(feats) == 1:
        entry = V.write_plot(V.curve_plot(table, _class_index(model, args.cls) or 0), outdir, f"{stem}_plot")
        files += [outdir / entry["svg"], outdir / entry["csv"]]
    config = {"kind": args.kind, "feature": args.feature, "resolution": args.resolution, "centered": args.centered}
    _manifest(args, f"baseline {args.kind}", config, [args.model, args.data], files, outdir,
              outdir / f"{stem}_manifest.json")
    print(f"wrote {files[0]} ({table.grid.shape[0]} grid points)")
    return EXIT_OK


def cmd_repro(args) -> int:
    outdir = Path(args.outdir)
    if args.study == "toy":
        study = ToyStudy(seed=args.seed, n=args.n, n_tree=args.ntree, save_model=args.save_model)
        result = run_toy(outdir, study, args.threads, args.timings)
    else:
        if not args.data:
            raise UsageError(f"repro {args.study} needs --data pointing at the UCI file")
        if args.study == "wwq":
            result = run_wwq(args.data, outdir, WwqStudy(seed=args.seed, n_tree=args.ntree,
                                                         save_model=args.save_model), args.threads, args.timings)
        else:
            result = run_cmc(args.data, outdir, CmcStudy(seed=args.seed, n_tree=args.ntree,
                                                         save_model=args.save_model), args.threads, args.timings)
    for c in result.checks:
        print(c)
    if not result.passed:
        print(f"{len(result.failed())} check(s) failed: " + "; ".join(c.name for c in result.failed()),
              file=sys.stderr)
        return EXIT_CHECK
    print(f"all {len(result.checks)} checks passed; artifacts in {outdir}")
    return EXIT_OK


# --- parser -----------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _bool(text: str) -> bool:
    t = text.lower()
    if t in ("true", "t", "yes", "1"):
        return True
    if t in ("false", "f", "no", "0"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def _model_args(p) -> None:
    p.add_argument("--model", required=True, help="model JSON written by train")
    p.add_argument("--data", required=True, help="training CSV the model was fitted on")
    p.add_argument("--delimiter", help="CSV delimiter (default: sniffed from the header)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rfcontrib", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--threads", type=_positive_int, default=None,
                        help="worker threads (default: FF_THREADS, else all cores); results do not depend on it")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="write a simulated toy dataset")
    p.add_argument("--generator", choices=("toy4", "sinehill"), default="toy4")
    p.add_argument("--n", type=_positive_int, default=5000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--rho", type=float, default=0.75, help="target cor(signal, y)")
    p.add_argument("--with-signal", action="store_true", help="append the noise-free signal as a column")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train a forest")
    p.add_argument("--data", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--task", choices=(REGRESSION, CLASSIFICATION), default=None,
                   help="default: classification for non-numeric targets, else regression")
    p.add_argument("--categorical", help="comma-separated feature columns to treat as categorical")
    p.add_argument("--delimiter")
    p.add_argument("--ntree", type=_positive_int, default=500)
    p.add_argument("--mtry", type=_positive_int)
    p.add_argument("--sampsize", type=_positive_int)
    p.add_argument("--replace", type=_bool, default=True, metavar="{true,false}")
    p.add_argument("--stratify", help="per-class bootstrap counts, e.g. 1:100,2:100,3:100")
    p.add_argument("--min-node", type=_positive_int, dest="min_node")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("decompose", help="feature contributions and the decomposition check")
    _model_args(p)
    p.add_argument("--oob", action="store_true", help="out-of-bag contributions")
    p.add_argument("--tolerance", type=float, default=1e-9)
    p.add_argument("--out", required=True, help=".csv (long format) or .json")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("gov", help="goodness-of-visualization scores")
    _model_args(p)
    p.add_argument("--feature", help="response feature(s), summed; omit for every main effect")
    p.add_argument("--context", help="context feature(s); default: the response features")
    p.add_argument("--k", type=_positive_int)
    p.add_argument("--class", dest="cls", help="class label (classification; default: weighted over classes)")
    p.add_argument("--plain", action="store_true", help="use plain instead of out-of-bag contributions")
    p.add_argument("--out", help="report JSON")
    p.set_defaults(func=cmd_gov)

    p = sub.add_parser("plot", help="render contribution plots to SVG + CSV")
    p.add_argument("plot", choices=("main", "interact", "simplex", "aligned"))
    _model_args(p)
    p.add_argument("--outdir", required=True)
    p.add_argument("--feature", help="feature(s); interact takes exactly two")
    p.add_argument("--color-by", dest="color_by", help="feature:NAME, pca or class")
    p.add_argument("--mapping", choices=("linear", "rank"), default="linear")
    p.add_argument("--response", choices=("single", "sum"), default="sum", help="interaction response")
    p.add_argument("--class", dest="cls", help="class label for main/interact plots")
    p.add_argument("--k", type=_positive_int)
    p.add_argument("--no-gov", action="store_true", help="skip the GOV overlay")
    p.add_argument("--plain", action="store_true", help="use plain instead of out-of-bag contributions")
    p.add_argument("--azim", type=float, default=V.render.DEFAULT_AZIM)
    p.add_argument("--elev", type=float, default=V.render.DEFAULT_ELEV)
    p.add_argument("--width", type=float, default=V.render.DEFAULT_DIMS[0], help="inches")
    p.add_argument("--height", type=float, default=V.render.DEFAULT_DIMS[1], help="inches")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("baseline", help="sensitivity analysis, partial dependence or ICE curves")
    p.add_argument("kind", choices=("sa", "pd", "ice"))
    _model_args(p)
    p.add_argument("--feature", required=True, help="one or two features")
    p.add_argument("--resolution", type=_positive_int, help="evenly spaced grid points (default: observed values)")
    p.add_argument("--centered", action="store_true", help="centre ICE curves at the first grid point")
    p.add_argument("--class", dest="cls")
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("repro", help="run a complete study into a directory")
    p.add_argument("study", choices=("toy", "wwq", "cmc"))
    p.add_argument("--outdir", required=True)
    p.add_argument("--data", help="UCI data file (wwq, cmc)")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--n", type=_positive_int, default=5000, help="toy sample size")
    p.add_argument("--ntree", type=_positive_int, default=500)
    p.add_argument("--save-model", action="store_true")
    p.add_argument("--timings", action="store_true", help="record stage timings in the manifest")
    p.set_defaults(func=cmd_repro)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, DataError, ModelFormatError, UnseenLevelError) as exc:
        print(f"rfcontrib: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (UsageError, ConfigError, SchemaError) as exc:
        print(f"rfcontrib: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DegenerateError, RFContribError) as exc:
        print(f"rfcontrib: error: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
