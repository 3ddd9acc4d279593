"""Command-line interface: one subcommand per pipeline stage.

Every run writes ``<command>.manifest.json`` into ``--out-dir`` with the
effective configuration, the seed, library versions, and SHA-256 hashes of
its inputs and outputs. Exit codes: 0 success, 1 usage/config error, 2 data
or schema error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import os
import platform
import sys
from dataclasses import fields
from typing import Any, Optional, Sequence

import numpy as np

from . import __version__
from .errors import ConfigError, NumericalError, RowError, SchemaError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
TARGET = "total_time_stopped_p50"

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "unit": "minutes",
    "synth": {},
    "features": {"weather": "auto", "distances": "auto"},
    "impute": {"rank": 3, "loss": "multinomial", "regularizer": "l2", "lam": 0.1, "holdout_fraction": 0.1,
               "threshold": 0.5, "max_iters": 50},
    "cluster": {"k": 4, "max_iters": 300, "tol": 1e-10},
    "busy": {"threshold_minutes": 30.0},
    "model": {"family": "gbt", "params": {}},
    "eval": {"mode": "cv", "k": 5, "train_fraction": 0.7, "metric": "mse",
             "families": ["l2", "huber", "knn", "gbt"]},
    "search": {"family": "gbt", "method": "grid", "grid": {}, "space": {}, "n_iter": 10},
}
FREE_FORM = {("synth",), ("model", "params"), ("search", "grid"), ("search", "space")}

DEFAULT_GRIDS = {
    "l2": {"l2_penalty": [0.0, 0.1, 1.0]},
    "huber": {"delta": [0.5, 1.0, 2.0]},
    "knn": {"k": [3, 5, 7, 9]},
    "gbt": {"learning_rate": [0.05, 0.1], "max_depth": [2, 3]},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --- configuration ----------------------------------------------------------


def _check_keys(given: dict, allowed: dict, path=()):
    for key, value in given.items():
        if key not in allowed:
            where = ".".join(path + (key,))
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(allowed[key], dict) and path + (key,) not in FREE_FORM:
            if not isinstance(value, dict):
                raise ConfigError(f"config key {'.'.join(path + (key,))!r} must be an object")
            _check_keys(value, allowed[key], path + (key,))


def _merge(base: dict, extra: dict, path=()) -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict) and path + (key,) not in FREE_FORM:
            out[key] = _merge(out[key], value, path + (key,))
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path: Optional[str]) -> dict:
    """Defaults overlaid with the JSON file at ``path`` (unknown keys rejected)."""
    if path is None:
        return copy.deepcopy(DEFAULTS)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            given = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(given, dict):
        raise ConfigError("config file must hold a JSON object")
    _check_keys(given, DEFAULTS)
    return _merge(DEFAULTS, given)


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _kv(items: Optional[Sequence[str]]) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"expected name=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = _parse_value(v)
    return out


# --- run bookkeeping ---------------------------------------------------------


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """Tracks inputs and outputs of one invocation and writes its manifest."""

    def __init__(self, command: str, out_dir: str, config: dict):
        self.command = command
        self.out_dir = out_dir
        self.config = config
        self.inputs: dict[str, dict] = {}
        self.outputs: list[str] = []
        os.makedirs(out_dir, exist_ok=True)

    def input(self, role: str, path: str) -> str:
        if not os.path.isfile(path):
            raise FileNotFoundError(f"{role} file not found: {path}")
        self.inputs[role] = {"name": os.path.basename(path), "sha256": _sha256(path)}
        return path

    def path(self, name: str) -> str:
        self.outputs.append(name)
        return os.path.join(self.out_dir, name)

    def write_text(self, name: str, text: str) -> str:
        p = self.path(name)
        with open(p, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        return p

    def write_json(self, name: str, obj) -> str:
        return self.write_text(name, json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")

    def finish(self) -> None:
        import scipy

        manifest = {
            "command": self.command,
            "config": self.config,
            "seed": self.config["seed"],
            "versions": {
                "congestion": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "python": ".".join(platform.python_version_tuple()[:2]),
            },
            "inputs": self.inputs,
            "outputs": {n: _sha256(os.path.join(self.out_dir, n)) for n in sorted(set(self.outputs))},
        }
        with open(os.path.join(self.out_dir, f"{self.command}.manifest.json"), "w", encoding="utf-8") as fh:
            fh.write(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# --- shared helpers ------------------------------------------------------------


def _load_dataset(run: Run, args):
    from .ingest import parse_csv

    if not args.data:
        raise UsageError(f"{run.command}: --data is required")
    return parse_csv(run.input("data", args.data), unit=run.config["unit"])


def _load_side_tables(run: Run, args):
    from .ingest import read_geo_csv, read_weather_csv

    weather = read_weather_csv(run.input("weather", args.weather)) if getattr(args, "weather", None) else None
    geo = read_geo_csv(run.input("geo", args.geo)) if getattr(args, "geo", None) else None
    return weather, geo


def _feature_spec(config: dict, weather, geo):
    from .features import default_spec

    fc = config["features"]

    def want(flag, available, what):
        if flag == "auto":
            return available
        if flag and not available:
            raise ConfigError(f"features.{what} is enabled but no {what} table was given")
        return bool(flag)

    use_weather = want(fc["weather"], weather is not None, "weather")
    use_geo = want(fc["distances"], geo is not None, "distances")
    spec = default_spec(weather=use_weather)
    if not use_geo:
        spec = [s for s in spec if s.source not in ("downtown_km", "outskirts_km")]
    return spec, (weather if use_weather else None), (geo if use_geo else None)


def _features(run: Run, args, dataset):
    from .features import build_feature_matrix

    weather, geo = _load_side_tables(run, args)
    spec, weather, geo = _feature_spec(run.config, weather, geo)
    return build_feature_matrix(dataset, spec, weather, geo)


def _estimator(family: str, params: dict):
    from .models import make_estimator

    try:
        return make_estimator(family, **params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {family}: {exc}") from None


def _model_params(config: dict, family: str) -> dict:
    from .models import default_params

    if family not in ("l2", "huber", "knn", "gbt"):
        raise ConfigError(f"unknown model family {family!r}")
    params = default_params(family)
    if config["model"]["family"] == family:
        unknown = set(config["model"]["params"]) - set(params)
        if unknown:
            raise ConfigError(f"unknown {family} parameters: {sorted(unknown)}")
        params.update(config["model"]["params"])
    return params


def _load_artifact(run: Run, path: Optional[str]):
    from .features import FeatureTransform
    from .models import model_from_dict

    if not path:
        raise UsageError(f"{run.command}: --artifact is required")
    with open(run.input("artifact", path), "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"model artifact is not valid JSON: {exc}") from None
    if doc.get("format") != "congestion.model/1":
        raise SchemaError("not a congestion model artifact")
    return doc, FeatureTransform.from_dict(doc["feature_transform"]), model_from_dict(doc["model"])


def _matrix_csv(names, X, extra_name=None, extra=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(names) + ([extra_name] if extra_name else []))
    for i in range(X.shape[0]):
        row = [repr(float(v)) for v in X[i]]
        if extra_name:
            row.append(repr(float(extra[i])))
        w.writerow(row)
    return buf.getvalue()


# --- subcommands ----------------------------------------------------------------


def cmd_synth(run: Run, args) -> None:
    from .ingest import SynthConfig, generate_synthetic, synthetic_geo, synthetic_weather, write_csv
    from .ingest import write_geo_csv, write_weather_csv

    allowed = {f.name for f in fields(SynthConfig)}
    opts = dict(run.config["synth"])
    unknown = set(opts) - allowed
    if unknown:
        raise ConfigError(f"unknown synth settings: {sorted(unknown)}")
    if args.rows is not None:
        opts["rows"] = args.rows
    opts["seed"] = run.config["seed"]
    for key in ("intersections_per_city", "city_centers"):
        if key in opts:
            opts[key] = tuple(tuple(v) if isinstance(v, list) else v for v in opts[key])
    cfg = SynthConfig(**opts)
    ds = generate_synthetic(cfg)
    with open(run.path("data.csv"), "w", encoding="utf-8", newline="") as fh:
        write_csv(ds, fh)
    write_weather_csv(synthetic_weather(cfg), run.path("weather.csv"))
    write_geo_csv(synthetic_geo(cfg), run.path("geo.csv"))


def cmd_validate(run: Run, args) -> None:
    from .core_data import summarize_violations

    ds = _load_dataset(run, args)
    inter = ds.intersections()
    run.write_json("validation.json", {
        "rows": len(ds),
        "intersections": len(inter),
        "cities": sorted({c for c, _, _ in inter.values()}),
        "violations": summarize_violations(ds.records),
        "warnings": list(ds.warnings),
    })


def cmd_features(run: Run, args) -> None:
    ds = _load_dataset(run, args)
    fm = _features(run, args, ds)
    from .core_data import target_vector

    run.write_text("features.csv", _matrix_csv(fm.column_names, fm.values, TARGET, target_vector(ds)))
    run.write_json("transform.json", fm.transform.to_dict())


def cmd_impute(run: Run, args) -> None:
    from .impute import impute_streets
    from .ingest import write_csv

    ds = _load_dataset(run, args)
    ic = run.config["impute"]
    res = impute_streets(ds, rank=ic["rank"], loss=ic["loss"], regularizer=ic["regularizer"], lam=ic["lam"],
                         holdout_fraction=ic["holdout_fraction"], threshold=ic["threshold"],
                         max_iters=ic["max_iters"], seed=run.config["seed"])
    with open(run.path("imputed.csv"), "w", encoding="utf-8", newline="") as fh:
        write_csv(res.dataset, fh)
    run.write_json("imputation.json", res.to_dict())


def cmd_cluster(run: Run, args) -> None:
    from .analysis import export_plot_data
    from .cluster import cluster_intersections

    ds = _load_dataset(run, args)
    cc = run.config["cluster"]
    _, _, _, res, purity = cluster_intersections(ds, cc["k"], cc["max_iters"], cc["tol"], run.config["seed"])
    run.write_text("clusters.csv", export_plot_data("clusters", result=res, dataset=ds))
    run.write_json("cluster.json", {
        "k": cc["k"], "purity": purity, "inertia": res.inertia, "iterations": res.iterations,
        "centroids": res.centroids.tolist(),
    })


def cmd_busy(run: Run, args) -> None:
    from .analysis import busy_table, export_plot_data

    ds = _load_dataset(run, args)
    bt = busy_table(ds, run.config["busy"]["threshold_minutes"])
    run.write_text("busy_curve.csv", export_plot_data("busy_curve", busy=bt))
    for c in bt.cities():
        run.write_text(f"city_map_{c}.csv", export_plot_data("city_map", dataset=ds, busy=bt, city=c))
    run.write_json("busy.json", {
        "threshold_minutes": bt.threshold_minutes,
        "busy_intersections": {str(c): sum(1 for i, hs in bt.busy.items() if ds.intersections()[i][0] == c)
                               for c in bt.cities()},
    })


def cmd_train(run: Run, args) -> None:
    from .core_data import target_vector
    from .models import model_to_dict

    family = run.config["model"]["family"]
    params = _model_params(run.config, family)
    ds = _load_dataset(run, args)
    fm = _features(run, args, ds)
    y = target_vector(ds)
    est = _estimator(family, params).fit(fm.values, y, feature_names=fm.column_names)
    from .evaluation import regression_metrics

    train = regression_metrics(y, est.predict(fm.values, threads=args.threads))
    run.write_json("model.json", {
        "format": "congestion.model/1",
        "family": family,
        "params": params,
        "target": TARGET,
        "feature_names": fm.column_names,
        "feature_transform": fm.transform.to_dict(),
        "model": model_to_dict(est.model_),
        "train_metrics": {"mse": train.mse, "mae": train.mae, "max_error": train.max_error},
    })


def _configurations(run: Run, args):
    if getattr(args, "artifact", None):
        doc, _, _ = _load_artifact(run, args.artifact)
        return [(doc["family"], dict(doc["params"]))]
    return [(f, _model_params(run.config, f)) for f in run.config["eval"]["families"]]


def cmd_evaluate(run: Run, args) -> None:
    from .core_data import target_vector
    from .evaluation import (EvalReport, ReportRow, correlation_matrix, cross_validate_dataset, durbin_watson,
                             regression_metrics, train_test_split)
    from .features import build_feature_matrix

    ec = run.config["eval"]
    seed = run.config["seed"]
    ds = _load_dataset(run, args)
    configs = _configurations(run, args)
    weather, geo_list = _load_side_tables(run, args)
    spec, weather, geo_list = _feature_spec(run.config, weather, geo_list)
    fm = build_feature_matrix(ds, spec, weather, geo_list)
    y = target_vector(ds)
    report = EvalReport()
    if ec["mode"] == "cv":
        for family, params in configs:
            cv = cross_validate_dataset(lambda: _estimator(family, params), ds, spec, weather, geo_list,
                                        ec["k"], seed, args.threads)
            report.rows.append(ReportRow(family, "cv", cv.mean, cv.folds, params))
    elif ec["mode"] == "holdout":
        train, test = train_test_split(ds, ec["train_fraction"], seed)
        ftrain = build_feature_matrix(train, spec, weather, geo_list)
        ftest = ftrain.apply(test)
        ytr, yte = target_vector(train), target_vector(test)
        for family, params in configs:
            est = _estimator(family, params).fit(ftrain.values, ytr)
            report.rows.append(ReportRow(family, "holdout", regression_metrics(yte, est.predict(ftest.values, args.threads)),
                                         [], params))
    else:
        raise ConfigError(f"eval.mode must be 'cv' or 'holdout', got {ec['mode']!r}")
    corr = correlation_matrix(fm.values, names=fm.column_names)
    diagnostics = {
        "correlated_pairs": [[fm.column_names[i], fm.column_names[j], r] for i, j, r in corr.flagged],
        "zero_variance": [fm.column_names[j] for j in corr.zero_variance],
    }
    if any(f in ("l2", "huber") for f, _ in configs):
        from .models import fit_ols

        ols = fit_ols(fm.values, y, 1e-8)
        diagnostics["durbin_watson"] = durbin_watson(y - ols.predict(fm.values))
    report.diagnostics = diagnostics
    run.write_text("eval.json", report.to_json())
    run.write_text("metrics.csv", report.to_csv())


def _search_space(spec: dict):
    from .evaluation import Choice, IntUniform, Uniform

    out = {}
    for name, d in spec.items():
        if isinstance(d, list):
            out[name] = Choice(d)
        elif isinstance(d, dict) and "choice" in d:
            out[name] = Choice(d["choice"])
        elif isinstance(d, dict) and "uniform" in d:
            out[name] = Uniform(float(d["uniform"][0]), float(d["uniform"][1]), bool(d.get("log", False)))
        elif isinstance(d, dict) and "int" in d:
            out[name] = IntUniform(int(d["int"][0]), int(d["int"][1]), bool(d.get("log", False)))
        else:
            raise ConfigError(f"search.space.{name}: expected a list or one of choice/uniform/int")
    return out


def cmd_search(run: Run, args) -> None:
    from .core_data import target_vector
    from .evaluation import grid_search, random_search

    sc = run.config["search"]
    family = sc["family"]
    base = _model_params(run.config, family)
    ds = _load_dataset(run, args)
    fm = _features(run, args, ds)
    y = target_vector(ds)
    ec = run.config["eval"]
    factory = lambda **p: _estimator(family, {**base, **p})
    if sc["method"] == "grid":
        grid = sc["grid"] or DEFAULT_GRIDS[family]
        res = grid_search(grid, factory, fm.values, y, ec["k"], run.config["seed"], ec["metric"], args.threads)
    elif sc["method"] == "random":
        if not sc["space"]:
            raise ConfigError("search.space is required for random search")
        res = random_search(_search_space(sc["space"]), sc["n_iter"], factory, fm.values, y, ec["k"],
                            run.config["seed"], ec["metric"], args.threads)
    else:
        raise ConfigError(f"search.method must be 'grid' or 'random', got {sc['method']!r}")
    run.write_json("search.json", {
        "family": family,
        "method": sc["method"],
        "metric": res.metric,
        "best_params": {**base, **res.best_params},
        "best_score": res.best_score,
        "trials": [
            {"params": t.params, "mean": {"mse": t.mean.mse, "mae": t.mean.mae, "max_error": t.mean.max_error}}
            for t in res.trials
        ],
    })


def cmd_importance(run: Run, args) -> None:
    from .models import GbtEnsemble, gbt_feature_importance

    doc, _, model = _load_artifact(run, args.artifact)
    if not isinstance(model, GbtEnsemble):
        raise ConfigError("importance needs a gbt model artifact")
    imp = gbt_feature_importance(model)
    names = doc["feature_names"]
    rows = sorted(zip(names, imp.tolist()), key=lambda t: (-t[1], t[0]))
    run.write_text("importance.csv", "feature,importance\n" + "".join(f"{n},{v!r}\n" for n, v in rows))


def cmd_predict(run: Run, args) -> None:
    _, transform, model = _load_artifact(run, args.artifact)
    from .models import KnnModel

    ds = _load_dataset(run, args)
    X = transform.apply(ds).values
    pred = model.predict(X, threads=args.threads) if isinstance(model, KnnModel) else model.predict(X)
    ids = ds.column("row_id")
    run.write_text("predictions.csv", "row_id,prediction\n" + "".join(f"{int(i)},{float(p)!r}\n" for i, p in zip(ids, pred)))


def cmd_report(run: Run, args) -> None:
    from .evaluation import EvalReport

    if not args.eval:
        raise UsageError("report: --eval is required")
    with open(run.input("eval", args.eval), "r", encoding="utf-8") as fh:
        try:
            rep = EvalReport.from_dict(json.load(fh))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise SchemaError(f"not an evaluation report: {exc}") from None
    run.write_text("report.csv", rep.to_csv())
    lines = ["| configuration | mode | MSE | MAE | Max Error |", "|---|---|---|---|---|"]
    for r in rep.rows:
        lines.append(f"| {r.configuration} | {r.mode} | {r.metrics.mse:.4f} | {r.metrics.mae:.4f} | "
                     f"{r.metrics.max_error:.4f} |")
    run.write_text("report.md", "\n".join(lines) + "\n")


COMMANDS = {
    "synth": (cmd_synth, "generate a synthetic dataset with weather and geo tables"),
    "validate": (cmd_validate, "parse and check a dataset CSV"),
    "features": (cmd_features, "build the feature matrix"),
    "impute": (cmd_impute, "fill missing street names per city"),
    "cluster": (cmd_cluster, "k-means on intersection coordinates"),
    "busy": (cmd_busy, "busy intersections by hour"),
    "train": (cmd_train, "fit one model and write its artifact"),
    "evaluate": (cmd_evaluate, "cross-validated or holdout comparison"),
    "search": (cmd_search, "grid or random hyperparameter search"),
    "importance": (cmd_importance, "feature importances of a gbt artifact"),
    "predict": (cmd_predict, "predict p50 stopped time with an artifact"),
    "report": (cmd_report, "metrics table from an evaluation report"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="congestion", description="Intersection congestion pipeline.")
    parser.add_argument("--version", action="version", version=f"congestion {__version__}")
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out-dir", default="out", help="output directory (default: out)")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--threads", type=int, default=1, help="worker threads; results do not depend on it")
    common.add_argument("--unit", choices=("minutes", "seconds"), help="time unit of the input CSV")
    data = _Parser(add_help=False)
    data.add_argument("--data", help="dataset CSV")
    side = _Parser(add_help=False)
    side.add_argument("--weather", help="weather CSV (city,month,rain_pct,snow_pct)")
    side.add_argument("--geo", help="geo CSV (city,downtown_lat,downtown_lon,outskirts_radius_km)")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name, (_, helptext) in COMMANDS.items():
        parents = [common]
        if name not in ("synth", "report", "importance"):
            parents.append(data)
        if name in ("features", "train", "evaluate", "search"):
            parents.append(side)
        p = sub.add_parser(name, parents=parents, help=helptext, description=helptext)
        if name == "synth":
            p.add_argument("--rows", type=int, help="number of records")
        if name in ("train", "search"):
            p.add_argument("--model", help="model family: l2, huber, knn, gbt")
            p.add_argument("--param", action="append", metavar="NAME=VALUE", help="model hyperparameter")
        if name == "evaluate":
            p.add_argument("--mode", choices=("cv", "holdout"))
            p.add_argument("--folds", type=int)
            p.add_argument("--families", help="comma-separated model families")
            p.add_argument("--artifact", help="evaluate this trained model's configuration")
        if name == "search":
            p.add_argument("--folds", type=int)
            p.add_argument("--method", choices=("grid", "random"))
            p.add_argument("--n-iter", type=int)
            p.add_argument("--metric", choices=("mse", "mae", "max_error"))
        if name in ("importance", "predict"):
            p.add_argument("--artifact", help="model.json written by train")
        if name == "report":
            p.add_argument("--eval", help="eval.json written by evaluate")
        if name == "busy":
            p.add_argument("--threshold", type=float, help="busy threshold in minutes")
        if name == "cluster":
            p.add_argument("-k", type=int, help="number of clusters")
    return parser


def _apply_flags(config: dict, args) -> dict:
    c = copy.deepcopy(config)
    if args.seed is not None:
        c["seed"] = args.seed
    if args.unit is not None:
        c["unit"] = args.unit
    if getattr(args, "model", None):
        c["model"]["family"] = args.model
        if args.command == "search":
            c["search"]["family"] = args.model
    if getattr(args, "param", None):
        c["model"]["params"] = {**c["model"]["params"], **_kv(args.param)}
    if getattr(args, "mode", None):
        c["eval"]["mode"] = args.mode
    if getattr(args, "folds", None) is not None:
        c["eval"]["k"] = args.folds
    if getattr(args, "families", None):
        c["eval"]["families"] = [f.strip() for f in args.families.split(",") if f.strip()]
    if getattr(args, "method", None):
        c["search"]["method"] = args.method
    if getattr(args, "n_iter", None) is not None:
        c["search"]["n_iter"] = args.n_iter
    if getattr(args, "metric", None):
        c["eval"]["metric"] = args.metric
    if getattr(args, "threshold", None) is not None:
        c["busy"]["threshold_minutes"] = args.threshold
    if getattr(args, "k", None) is not None:
        c["cluster"]["k"] = args.k
    return c


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        config = _apply_flags(load_config(args.config), args)
        run = Run(args.command, args.out_dir, config)
        COMMANDS[args.command][0](run, args)
        run.finish()
        return EXIT_OK
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (SchemaError, RowError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (OSError, UnicodeDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
