"""Uniform fit/predict wrappers used by cross-validation, search and the CLI,
plus JSON (de)serialization of fitted models."""
from __future__ import annotations

import numpy as np

from .gbt import GbtEnsemble, RegressionTree, gbt_fit
from .knn import KnnModel, knn_fit
from .linear import LinearModel, fit_huber, fit_ols, independent_columns

FORMAT_VERSION = 1


class LinearRegressor:
    """L2 or Huber linear regression.

    With ``drop_collinear`` (the default) columns that are linear
    combinations of earlier columns and the intercept are left out before
    fitting, so one-hot blocks and derived differences do not make the
    design singular. ``fit_ols``/``fit_huber`` themselves never drop columns.
    """

    def __init__(self, loss="l2", delta=1.0, l2_penalty=0.0, max_iters=200, tol=1e-10, drop_collinear=True):
        if loss not in ("l2", "huber"):
            raise ValueError("loss must be 'l2' or 'huber'")
        self.loss = loss
        self.delta = delta
        self.l2_penalty = l2_penalty
        self.max_iters = max_iters
        self.tol = tol
        self.drop_collinear = bool(drop_collinear)
        self.model_ = None

    def get_params(self):
        return {"loss": self.loss, "delta": self.delta, "l2_penalty": self.l2_penalty,
                "max_iters": self.max_iters, "tol": self.tol, "drop_collinear": self.drop_collinear}

    def fit(self, X, y, feature_names=None):
        X = np.asarray(X, dtype=np.float64)
        cols = None
        if self.drop_collinear:
            cols = independent_columns(X)
            if len(cols) == X.shape[1]:
                cols = None
        if cols is not None:
            X = X[:, cols]
            if feature_names is not None:
                feature_names = [feature_names[j] for j in cols]
        if self.loss == "l2":
            model = fit_ols(X, y, self.l2_penalty, feature_names)
        else:
            model = fit_huber(X, y, self.delta, self.l2_penalty, self.max_iters, self.tol, feature_names)
        model.input_columns = cols
        self.model_ = model
        return self

    def predict(self, X, threads=1):
        return self.model_.predict(X)


class KnnRegressor:
    def __init__(self, k=7, metric="euclidean", weighting="uniform"):
        self.k = int(k)
        self.metric = metric
        self.weighting = weighting
        self.model_ = None

    def get_params(self):
        return {"k": self.k, "metric": self.metric, "weighting": self.weighting}

    def fit(self, X, y, feature_names=None):
        self.model_ = knn_fit(X, y, self.metric, self.weighting)
        return self

    def predict(self, X, threads=1):
        return self.model_.predict(X, self.k, threads=threads)


class GbtRegressor:
    def __init__(self, n_estimators=100, max_depth=3, learning_rate=0.1, min_leaf=5, seed=0):
        self.n_estimators = int(n_estimators)
        self.max_depth = int(max_depth)
        self.learning_rate = float(learning_rate)
        self.min_leaf = int(min_leaf)
        self.seed = int(seed)
        self.model_ = None

    def get_params(self):
        return {"n_estimators": self.n_estimators, "max_depth": self.max_depth,
                "learning_rate": self.learning_rate, "min_leaf": self.min_leaf, "seed": self.seed}

    def fit(self, X, y, feature_names=None):
        self.model_ = gbt_fit(X, y, self.n_estimators, self.max_depth, self.learning_rate,
                              self.min_leaf, self.seed, feature_names)
        return self

    def predict(self, X, threads=1):
        return self.model_.predict(X)


FAMILIES = {
    "l2": lambda **kw: LinearRegressor(loss="l2", **kw),
    "huber": lambda **kw: LinearRegressor(loss="huber", **kw),
    "knn": KnnRegressor,
    "gbt": GbtRegressor,
}


def make_estimator(family: str, **params):
    try:
        factory = FAMILIES[family]
    except KeyError:
        raise ValueError(f"unknown model family {family!r}; choose from {sorted(FAMILIES)}") from None
    return factory(**params)


def default_params(family: str) -> dict:
    params = make_estimator(family).get_params()
    if family in ("l2", "huber"):
        params.pop("loss")
    return params


# --- serialization ---------------------------------------------------------


def model_to_dict(model) -> dict:
    """Self-describing JSON-ready dict; floats survive via repr round-trip."""
    if isinstance(model, LinearModel):
        return {
            "kind": "linear",
            "format_version": FORMAT_VERSION,
            "intercept": model.intercept,
            "coefficients": model.coefficients.tolist(),
            "loss": model.loss,
            "delta": model.delta,
            "l2_penalty": model.l2_penalty,
            "selected_features": list(model.selected_features),
            "input_columns": None if model.input_columns is None else [int(j) for j in model.input_columns],
        }
    if isinstance(model, KnnModel):
        return {
            "kind": "knn",
            "format_version": FORMAT_VERSION,
            "metric": model.metric,
            "weighting": model.weighting,
            "train_X": model.train_X.tolist(),
            "train_y": model.train_y.tolist(),
        }
    if isinstance(model, GbtEnsemble):
        return {
            "kind": "gbt",
            "format_version": FORMAT_VERSION,
            "base_value": model.base_value,
            "learning_rate": model.learning_rate,
            "max_depth": model.max_depth,
            "min_leaf": model.min_leaf,
            "n_features": model.n_features,
            "feature_names": list(model.feature_names),
            "train_mse": list(model.train_mse),
            "trees": [t.to_dict() for t in model.trees],
        }
    raise TypeError(f"cannot serialize {type(model).__name__}")


def model_from_dict(d: dict):
    kind = d.get("kind")
    if d.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {d.get('format_version')!r}")
    if kind == "linear":
        return LinearModel(d["intercept"], np.asarray(d["coefficients"], dtype=np.float64), d["loss"],
                           d["delta"], d["l2_penalty"], list(d["selected_features"]),
                           input_columns=d.get("input_columns"))
    if kind == "knn":
        X = np.asarray(d["train_X"], dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(len(d["train_y"]), -1)
        return knn_fit(X, d["train_y"], d["metric"], d["weighting"])
    if kind == "gbt":
        return GbtEnsemble(d["base_value"], [RegressionTree.from_dict(t) for t in d["trees"]],
                           d["learning_rate"], d["max_depth"], d["min_leaf"], d["n_features"],
                           list(d["feature_names"]), list(d["train_mse"]))
    raise ValueError(f"unknown model kind {kind!r}")


def estimator_from_model(model, params: dict | None = None):
    """Wrap a bare fitted model back into its estimator."""
    params = dict(params or {})
    if isinstance(model, LinearModel):
        est = LinearRegressor(loss=model.loss, delta=model.delta or 1.0, l2_penalty=model.l2_penalty)
    elif isinstance(model, KnnModel):
        est = KnnRegressor(k=params.get("k", 7), metric=model.metric, weighting=model.weighting)
    elif isinstance(model, GbtEnsemble):
        est = GbtRegressor(len(model.trees), model.max_depth, model.learning_rate, model.min_leaf)
    else:
        raise TypeError(type(model).__name__)
    est.model_ = model
    return est
