"""Metrics, data splits, cross-validation, hyperparameter search and
linear-regression diagnostics."""
from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Mapping, NamedTuple, Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class MetricTriple:
    mse: float
    mae: float
    max_error: float

    def get(self, name: str) -> float:
        return {"mse": self.mse, "mae": self.mae, "max_error": self.max_error}[name]


def regression_metrics(y_true, y_pred) -> MetricTriple:
    y_true = np.asarray(y_true, dtype=np.float64).ravel()
    y_pred = np.asarray(y_pred, dtype=np.float64).ravel()
    if y_true.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {y_true.size} vs {y_pred.size}")
    if y_true.size == 0:
        raise ValueError("empty input")
    err = y_true - y_pred
    a = np.abs(err)
    return MetricTriple(float(np.mean(err * err)), float(np.mean(a)), float(np.max(a)))


def mean_metrics(triples: Sequence[MetricTriple]) -> MetricTriple:
    return MetricTriple(
        float(np.mean([t.mse for t in triples])),
        float(np.mean([t.mae for t in triples])),
        float(np.mean([t.max_error for t in triples])),
    )


# --- splitting -------------------------------------------------------------


def train_test_indices(n: int, train_fraction: float = 0.7, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    if n < 2:
        raise ValueError("need at least 2 rows to split")
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    perm = np.random.default_rng(seed).permutation(n)
    cut = int(math.floor(n * train_fraction))
    return perm[:cut], perm[cut:]


def train_test_split(data, train_fraction: float = 0.7, seed: int = 0):
    """Seeded shuffle, then split at floor(n * train_fraction).

    Works on a :class:`~congestion.core_data.Dataset` (returns two datasets)
    or any numpy-indexable array (returns two arrays).
    """
    train, test = train_test_indices(len(data), train_fraction, seed)
    if hasattr(data, "take") and hasattr(data, "records"):
        return data.take(train), data.take(test)
    arr = np.asarray(data)
    return arr[train], arr[test]


def kfold_split(n: int, k: int = 5, seed: int = 0) -> list[np.ndarray]:
    if not 2 <= k <= n:
        raise ValueError(f"k must satisfy 2 <= k <= n ({n}), got {k}")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.asarray(f) for f in np.array_split(perm, k)]


# --- cross-validation -------------------------------------------------------


@dataclass
class CVResult:
    folds: list[MetricTriple]
    mean: MetricTriple


def _annotate(exc: BaseException, fold: int) -> BaseException:
    exc.fold = fold
    if exc.args and isinstance(exc.args[0], str):
        exc.args = (f"fold {fold}: {exc.args[0]}",) + exc.args[1:]
    return exc


def cross_validate(model_factory: Callable[[], Any], X, y, k: int = 5, seed: int = 0, threads: int = 1) -> CVResult:
    """Fit on each fold's complement and score on the fold.

    ``model_factory()`` must return a fresh object with ``fit(X, y)`` and
    ``predict(X)``. Results are collected in fold order for any ``threads``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    folds = kfold_split(len(y), k, seed)
    everything = np.arange(len(y))

    def run(i):
        test = np.sort(folds[i])
        train = np.setdiff1d(everything, test, assume_unique=True)
        try:
            model = model_factory().fit(X[train], y[train])
            return regression_metrics(y[test], model.predict(X[test]))
        except Exception as exc:
            raise _annotate(exc, i)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            scores = list(pool.map(run, range(k)))
    else:
        scores = [run(i) for i in range(k)]
    return CVResult(scores, mean_metrics(scores))


def cross_validate_dataset(model_factory: Callable[[], Any], dataset, spec, weather_table=None, geo=None,
                           k: int = 5, seed: int = 0, threads: int = 1,
                           target: str = "total_time_stopped_p50") -> CVResult:
    """Cross-validation on raw records.

    Scaling and encoding parameters are refit on each fold's training rows
    and applied to its held-out rows, so no test-fold statistics leak into
    the features.
    """
    from .core_data import target_vector
    from .features import build_feature_matrix

    folds = kfold_split(len(dataset), k, seed)
    everything = np.arange(len(dataset))

    def run(i):
        test = np.sort(folds[i])
        train = np.setdiff1d(everything, test, assume_unique=True)
        try:
            dtr, dte = dataset.take(train), dataset.take(test)
            ftr = build_feature_matrix(dtr, spec, weather_table, geo)
            model = model_factory().fit(ftr.values, target_vector(dtr, target))
            return regression_metrics(target_vector(dte, target), model.predict(ftr.apply(dte).values))
        except Exception as exc:
            raise _annotate(exc, i)

    # per-fold refits repeat the data warnings already raised on the full data
    feature_log = logging.getLogger("congestion.features")
    level = feature_log.level
    feature_log.setLevel(logging.ERROR)
    try:
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                scores = list(pool.map(run, range(k)))
        else:
            scores = [run(i) for i in range(k)]
    finally:
        feature_log.setLevel(level)
    return CVResult(scores, mean_metrics(scores))


# --- search ----------------------------------------------------------------


@dataclass(frozen=True)
class Choice:
    values: tuple

    def __init__(self, values):
        object.__setattr__(self, "values", tuple(values))
        if not self.values:
            raise ValueError("Choice needs at least one value")

    def draw(self, rng):
        return self.values[int(rng.integers(len(self.values)))]


@dataclass(frozen=True)
class Uniform:
    low: float
    high: float
    log: bool = False

    def draw(self, rng):
        if self.log:
            return float(math.exp(rng.uniform(math.log(self.low), math.log(self.high))))
        return float(rng.uniform(self.low, self.high))


@dataclass(frozen=True)
class IntUniform:
    """Integers in [low, high] inclusive."""

    low: int
    high: int
    log: bool = False

    def draw(self, rng):
        if self.log:
            v = math.exp(rng.uniform(math.log(self.low), math.log(self.high + 1)))
            return int(min(self.high, max(self.low, math.floor(v))))
        return int(rng.integers(self.low, self.high + 1))


@dataclass
class Trial:
    params: dict
    folds: list[MetricTriple]
    mean: MetricTriple


@dataclass
class SearchResult:
    best_params: dict
    best_score: float
    trials: list[Trial]
    metric: str = "mse"


def _evaluate_trials(param_list, model_factory, X, y, k, seed, metric, threads):
    trials = []
    for params in param_list:
        cv = cross_validate(lambda: model_factory(**params), X, y, k, seed, threads)
        trials.append(Trial(dict(params), cv.folds, cv.mean))
    best = min(range(len(trials)), key=lambda i: (trials[i].mean.get(metric), i))
    return SearchResult(dict(trials[best].params), trials[best].mean.get(metric), trials, metric)


def grid_points(param_grid: Mapping[str, Sequence]) -> list[dict]:
    """Cartesian product, keys in sorted order, values in the given order."""
    keys = sorted(param_grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(param_grid[k] for k in keys))]


def grid_search(param_grid: Mapping[str, Sequence], model_factory, X, y, k: int = 5, seed: int = 0,
                metric: str = "mse", threads: int = 1) -> SearchResult:
    if not param_grid or any(len(v) == 0 for v in param_grid.values()):
        raise ValueError("empty parameter grid")
    return _evaluate_trials(grid_points(param_grid), model_factory, X, y, k, seed, metric, threads)


def random_search(param_space: Mapping[str, Any], n_iter: int, model_factory, X, y, k: int = 5, seed: int = 0,
                  metric: str = "mse", threads: int = 1) -> SearchResult:
    """``n_iter`` independent seeded draws from ``param_space``.

    Values of ``param_space`` are :class:`Choice`, :class:`Uniform` or
    :class:`IntUniform`; a plain list is treated as a Choice.
    """
    if not param_space:
        raise ValueError("empty parameter space")
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")
    dims = {name: (d if hasattr(d, "draw") else Choice(d)) for name, d in param_space.items()}
    rng = np.random.default_rng(seed)
    draws = [{name: dims[name].draw(rng) for name in sorted(dims)} for _ in range(n_iter)]
    return _evaluate_trials(draws, model_factory, X, y, k, seed, metric, threads)


# --- diagnostics -----------------------------------------------------------


def durbin_watson(residuals) -> float:
    e = np.asarray(residuals, dtype=np.float64).ravel()
    if e.size < 2:
        raise ValueError("need at least 2 residuals")
    denom = float(e @ e)
    if denom == 0.0:
        raise ValueError("residuals are all zero")
    d = np.diff(e)
    return float(d @ d) / denom


@dataclass
class CorrelationReport:
    matrix: np.ndarray
    flagged: list[tuple[int, int, float]]
    zero_variance: list[int]
    names: list[str] = field(default_factory=list)


def correlation_matrix(X, threshold: float = 0.9, names: Optional[Sequence[str]] = None) -> CorrelationReport:
    """Pearson correlations; pairs with |r| > threshold are flagged.

    A constant column gets r = 0 against every other column.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need a 2-D matrix with at least 2 rows")
    p = X.shape[1]
    C = X - X.mean(axis=0)
    sd = np.sqrt(np.sum(C * C, axis=0))
    zero = [j for j in range(p) if sd[j] == 0]
    safe = np.where(sd == 0, 1.0, sd)
    Z = C / safe
    R = Z.T @ Z
    R[:, zero] = 0.0
    R[zero, :] = 0.0
    R = np.clip(R, -1.0, 1.0)
    R = 0.5 * (R + R.T)
    np.fill_diagonal(R, 1.0)
    flagged = [(i, j, float(R[i, j])) for i in range(p) for j in range(i + 1, p) if abs(R[i, j]) > threshold]
    return CorrelationReport(R, flagged, zero, list(names) if names is not None else [])


class InformationCriteria(NamedTuple):
    aic: float
    bic: float
    perfect_fit: bool = False


def aic_bic(n: int, num_params: int, rss: float) -> InformationCriteria:
    """Gaussian-likelihood AIC/BIC; ``num_params`` counts the intercept.

    A zero residual sum returns ``-inf`` for both with ``perfect_fit`` set.
    """
    if not n > num_params >= 1:
        raise ValueError(f"need n > num_params >= 1, got n={n}, num_params={num_params}")
    if rss < 0:
        raise ValueError("rss must be >= 0")
    if rss == 0:
        return InformationCriteria(-math.inf, -math.inf, True)
    base = n * math.log(rss / n)
    return InformationCriteria(base + 2 * num_params, base + num_params * math.log(n), False)


# --- reports ----------------------------------------------------------------


@dataclass
class ReportRow:
    configuration: str
    mode: str  # "cv" (mean over folds) | "holdout"
    metrics: MetricTriple
    folds: list[MetricTriple] = field(default_factory=list)
    params: dict = field(default_factory=dict)


@dataclass
class EvalReport:
    rows: list[ReportRow] = field(default_factory=list)
    search: Optional[dict] = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "rows": [
                {
                    "configuration": r.configuration,
                    "mode": r.mode,
                    "metrics": asdict(r.metrics),
                    "folds": [asdict(f) for f in r.folds],
                    "params": r.params,
                }
                for r in self.rows
            ],
            "search": self.search,
            "diagnostics": self.diagnostics,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        rows = [
            ReportRow(r["configuration"], r["mode"], MetricTriple(**r["metrics"]),
                      [MetricTriple(**f) for f in r.get("folds", [])], dict(r.get("params", {})))
            for r in d["rows"]
        ]
        return cls(rows, d.get("search"), d.get("diagnostics", {}))

    def to_csv(self) -> str:
        """Configurations x (MSE, MAE, Max Error)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["configuration", "mode", "MSE", "MAE", "Max Error"])
        for r in self.rows:
            w.writerow([r.configuration, r.mode, f"{r.metrics.mse:.4f}", f"{r.metrics.mae:.4f}",
                        f"{r.metrics.max_error:.4f}"])
        return buf.getvalue()
