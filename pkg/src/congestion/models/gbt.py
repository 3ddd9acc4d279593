"""Least-squares gradient boosting over depth-limited regression trees."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .. import _kernels


@dataclass
class RegressionTree:
    """Flat binary tree; node 0 is the root, ``left[i] < 0`` marks a leaf.

    Rows with ``x[feature] <= threshold`` go left.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    n_samples: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_splits(self) -> int:
        return int(np.sum(self.left >= 0))

    def depth(self) -> int:
        best = 0
        stack = [(0, 0)]
        while stack:
            node, d = stack.pop()
            best = max(best, d)
            if self.left[node] >= 0:
                stack += [(self.left[node], d + 1), (self.right[node], d + 1)]
        return best

    def predict(self, X) -> np.ndarray:
        return _kernels.tree_predict(X, self.feature, self.threshold, self.left, self.right, self.value)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "gain": self.gain.tolist(),
            "n_samples": self.n_samples.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        ints = {"feature", "left", "right", "n_samples"}
        return cls(**{k: np.asarray(v, dtype=np.int64 if k in ints else np.float64) for k, v in d.items()})


def fit_tree(X, resid, orders, sorted_values, max_depth: int, min_leaf: int) -> tuple[RegressionTree, np.ndarray]:
    """Grow one tree on ``resid`` level by level.

    Returns the tree and each training row's leaf id. ``orders`` holds the
    stable argsort of every column (shape ``(p, n)``) and ``sorted_values``
    the column values in that order; both are computed once per ensemble.
    """
    n = X.shape[0]
    feature, threshold, left, right, value, gain, count = [-1], [0.0], [-1], [-1], [0.0], [0.0], [n]
    leaf_of = np.zeros(n, dtype=np.int64)
    frontier = [0]
    # node_of holds the frontier-local id of rows still in an expandable node
    node_of = np.zeros(n, dtype=np.int64)
    for _ in range(max_depth):
        if not frontier:
            break
        nf = len(frontier)
        active = node_of >= 0
        node_count = np.bincount(node_of[active], minlength=nf).astype(np.int64)
        node_sum = np.bincount(node_of[active], weights=resid[active], minlength=nf)
        bf, bt, bg = _kernels.split_level(sorted_values, orders, node_of, resid, nf, node_count, node_sum, min_leaf)
        new_frontier = []
        local = np.full(nf, -1, dtype=np.int64)
        next_node_of = np.full(n, -1, dtype=np.int64)
        for j, node in enumerate(frontier):
            if bf[j] < 0:
                continue
            a, b = len(feature), len(feature) + 1
            feature[node], threshold[node], left[node], right[node], gain[node] = int(bf[j]), float(bt[j]), a, b, float(bg[j])
            for _child in (a, b):
                feature.append(-1); threshold.append(0.0); left.append(-1); right.append(-1)
                value.append(0.0); gain.append(0.0); count.append(0)
            local[j] = len(new_frontier)
            new_frontier += [a, b]
        split_rows = active & (local[np.where(active, node_of, 0)] >= 0)
        rows = np.flatnonzero(split_rows)
        j = node_of[rows]
        goes_left = X[rows, bf[j]] <= bt[j]
        child_local = local[j] + np.where(goes_left, 0, 1)
        next_node_of[rows] = child_local
        fr = np.asarray(new_frontier, dtype=np.int64)
        if len(rows):
            leaf_of[rows] = fr[child_local]
        node_of = next_node_of
        frontier = new_frontier
    # leaf values: mean residual of the rows that reached each leaf
    n_nodes = len(feature)
    sums = np.bincount(leaf_of, weights=resid, minlength=n_nodes)
    counts = np.bincount(leaf_of, minlength=n_nodes)
    for node in range(n_nodes - 1, -1, -1):
        if left[node] < 0:
            value[node] = sums[node] / counts[node] if counts[node] else 0.0
            count[node] = int(counts[node])
        else:
            count[node] = count[left[node]] + count[right[node]]
    tree = RegressionTree(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(value, dtype=np.float64),
        np.asarray(gain, dtype=np.float64),
        np.asarray(count, dtype=np.int64),
    )
    return tree, leaf_of


@dataclass
class GbtEnsemble:
    base_value: float
    trees: list[RegressionTree]
    learning_rate: float
    max_depth: int
    min_leaf: int
    n_features: int
    feature_names: list[str] = field(default_factory=list)
    train_mse: list[float] = field(default_factory=list)

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        pred = np.full(X.shape[0], self.base_value)
        for tree in self.trees:
            pred = pred + self.learning_rate * tree.predict(X)
        return pred

    @property
    def n_estimators(self) -> int:
        return len(self.trees)


def gbt_fit(
    X,
    y,
    n_estimators: int = 100,
    max_depth: int = 3,
    learning_rate: float = 0.1,
    min_leaf: int = 5,
    seed: int = 0,
    feature_names: Optional[Sequence[str]] = None,
) -> GbtEnsemble:
    """Boost ``n_estimators`` least-squares trees on the running residuals.

    Split search is exhaustive over midpoints of consecutive distinct values,
    so the fit is deterministic; ``seed`` is accepted for interface symmetry
    and recorded, but nothing is sampled.
    """
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.shape[0] == 0:
        raise ValueError("empty training data")
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y lengths differ")
    if n_estimators < 0 or max_depth < 0:
        raise ValueError("n_estimators and max_depth must be >= 0")
    if not 0.0 < learning_rate <= 1.0:
        raise ValueError("learning_rate must be in (0, 1]")
    if min_leaf < 1:
        raise ValueError("min_leaf must be >= 1")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("X and y must be finite")
    orders = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
    sorted_values = np.ascontiguousarray(np.take_along_axis(X, orders.T, axis=0).T)
    base = float(np.mean(y))
    F = np.full(len(y), base)
    resid = y - F
    trace = [float(np.mean(resid * resid))]
    trees = []
    for _ in range(n_estimators):
        tree, leaf_of = fit_tree(X, resid, orders, sorted_values, max_depth, min_leaf)
        F = F + learning_rate * tree.value[leaf_of]
        resid = y - F
        trees.append(tree)
        trace.append(float(np.mean(resid * resid)))
    names = list(feature_names) if feature_names is not None else [f"x{i}" for i in range(X.shape[1])]
    return GbtEnsemble(base, trees, float(learning_rate), int(max_depth), int(min_leaf), X.shape[1], names, trace)


def gbt_predict(ensemble: GbtEnsemble, x_row) -> float:
    return float(ensemble.predict(np.asarray(x_row, dtype=np.float64)[None, :])[0])


def gbt_feature_importance(ensemble: GbtEnsemble) -> np.ndarray:
    """Total split gain (SSE reduction) per feature, normalized to sum 1.

    All zeros when the ensemble contains no split.
    """
    imp = np.zeros(ensemble.n_features)
    for tree in ensemble.trees:
        internal = tree.left >= 0
        np.add.at(imp, tree.feature[internal], tree.gain[internal])
    total = imp.sum()
    return imp / total if total > 0 else imp
