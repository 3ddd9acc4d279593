"""K-nearest-neighbour regression with an exact KD-tree index."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .. import _kernels

METRICS = {"euclidean": 0, "manhattan": 1}
WEIGHTINGS = ("uniform", "inverse_distance")
KDTREE_MAX_DIM = 16


@dataclass
class KDTree:
    """Bucketed KD-tree with per-node bounding boxes.

    Node ``i`` owns ``perm[start[i]:end[i]]``; ``left[i] < 0`` marks a leaf.
    """

    perm: np.ndarray
    start: np.ndarray
    end: np.ndarray
    left: np.ndarray
    right: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def build(cls, data: np.ndarray, leaf_size: int = 16) -> "KDTree":
        n, d = data.shape
        perm = np.arange(n, dtype=np.int64)
        start, end, left, right, lo, hi = [], [], [], [], [], []

        def new_node(s, e):
            pts = data[perm[s:e]]
            start.append(s)
            end.append(e)
            left.append(-1)
            right.append(-1)
            lo.append(pts.min(axis=0))
            hi.append(pts.max(axis=0))
            return len(start) - 1

        root = new_node(0, n)
        stack = [root]
        while stack:
            node = stack.pop()
            s, e = start[node], end[node]
            if e - s <= leaf_size:
                continue
            spread = hi[node] - lo[node]
            dim = int(np.argmax(spread))
            if spread[dim] == 0:
                continue
            seg = perm[s:e]
            order = np.lexsort((seg, data[seg, dim]))
            perm[s:e] = seg[order]
            mid = s + (e - s) // 2
            a = new_node(s, mid)
            b = new_node(mid, e)
            left[node], right[node] = a, b
            stack += [b, a]
        return cls(
            perm,
            np.array(start, dtype=np.int64),
            np.array(end, dtype=np.int64),
            np.array(left, dtype=np.int64),
            np.array(right, dtype=np.int64),
            np.array(lo, dtype=np.float64).reshape(-1, d),
            np.array(hi, dtype=np.float64).reshape(-1, d),
        )


@dataclass
class KnnModel:
    train_X: np.ndarray
    train_y: np.ndarray
    metric: str = "euclidean"
    weighting: str = "uniform"
    index: Optional[KDTree] = None

    @property
    def n_train(self) -> int:
        return self.train_X.shape[0]

    def neighbors(self, X, k: int, brute: bool = False, threads: int = 1):
        """(indices, distances) of the k nearest training rows, ascending by
        (distance, training index)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.train_X.shape[1]:
            raise ValueError(f"expected {self.train_X.shape[1]} features, got {X.shape[1]}")
        if not 1 <= k <= self.n_train:
            raise ValueError(f"k must be in [1, {self.n_train}], got {k}")
        code = METRICS[self.metric]

        def run(block):
            if self.index is None or brute:
                return _kernels.knn_brute(self.train_X, block, k, code)
            t = self.index
            return _kernels.kdtree_query(self.train_X, t.perm, t.start, t.end, t.left, t.right, t.lo, t.hi, block, k, code)

        if threads <= 1 or len(X) < 2 * threads:
            idx, dist = run(X)
        else:
            chunks = np.array_split(X, threads)
            with ThreadPoolExecutor(max_workers=threads) as pool:
                parts = list(pool.map(run, chunks))
            idx = np.vstack([p[0] for p in parts])
            dist = np.vstack([p[1] for p in parts])
        if self.metric == "euclidean":
            dist = np.sqrt(dist)
        return idx, dist

    def predict(self, X, k: int, threads: int = 1) -> np.ndarray:
        idx, dist = self.neighbors(X, k, threads=threads)
        targets = self.train_y[idx]
        if self.weighting == "uniform":
            return targets.mean(axis=1)
        w = 1.0 / (dist + 1e-12)
        return (w * targets).sum(axis=1) / w.sum(axis=1)


def knn_fit(X, y, metric: str = "euclidean", weighting: str = "uniform", leaf_size: int = 16) -> KnnModel:
    """Store the training data; index it with a KD-tree when d <= 16."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.shape[0] == 0:
        raise ValueError("empty training set")
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y lengths differ")
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {sorted(METRICS)}")
    if weighting not in WEIGHTINGS:
        raise ValueError(f"weighting must be one of {WEIGHTINGS}")
    index = KDTree.build(X, leaf_size) if X.shape[1] <= KDTREE_MAX_DIM else None
    return KnnModel(X, y, metric, weighting, index)


def knn_predict(model: KnnModel, x_row, k: int) -> float:
    return float(model.predict(np.asarray(x_row, dtype=np.float64)[None, :], k)[0])
