"""Lloyd's k-means on (latitude, longitude) to check that cities separate."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass
class KMeansResult:
    centroids: np.ndarray  # (k, d)
    assignments: np.ndarray  # (n,) int64
    inertia: float
    iterations: int
    inertia_history: list[float]


def _assign(points, centroids):
    # per-dimension accumulation keeps the summation order fixed
    d2 = np.zeros((points.shape[0], centroids.shape[0]))
    for t in range(points.shape[1]):
        diff = points[:, t, None] - centroids[None, :, t]
        d2 += diff * diff
    labels = np.argmin(d2, axis=1)  # first minimum -> lowest index on ties
    best = d2[np.arange(len(points)), labels]
    return labels, best


def _plusplus(points, k, rng):
    n = len(points)
    centers = [int(rng.integers(n))]
    closest = np.sum((points - points[centers[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = closest.sum()
        cdf = np.cumsum(closest)
        pick = int(np.searchsorted(cdf, rng.random() * total, side="right"))
        pick = min(pick, n - 1)
        while closest[pick] == 0.0:  # never duplicate a center
            pick = int(np.flatnonzero(closest > 0)[0])
        centers.append(pick)
        closest = np.minimum(closest, np.sum((points - points[pick]) ** 2, axis=1))
    return points[centers].copy()


def _means(points, labels, k):
    counts = np.bincount(labels, minlength=k)
    sums = np.stack([np.bincount(labels, weights=points[:, t], minlength=k) for t in range(points.shape[1])], axis=1)
    return sums, counts


def kmeans(points, k: int, max_iters: int = 300, tol: float = 1e-10, seed: int = 0) -> KMeansResult:
    """k-means++ seeding followed by Lloyd iterations.

    Stops when the inertia improves by less than ``tol`` or after
    ``max_iters`` updates. An empty cluster is re-seeded at the point
    farthest from its current centroid.
    """
    X = np.asarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if k < 1:
        raise ConfigError("k must be >= 1")
    if len(X) == 0 or len(np.unique(X, axis=0)) < k:
        raise ConfigError(f"need at least k={k} distinct points")
    if not np.all(np.isfinite(X)):
        raise ConfigError("points must be finite")
    rng = np.random.default_rng(seed)
    C = _plusplus(X, k, rng)
    labels, d2 = _assign(X, C)
    inertia = float(d2.sum())
    history = [inertia]
    it = 0
    while it < max_iters:
        sums, counts = _means(X, labels, k)
        C_new = C.copy()
        full = counts > 0
        C_new[full] = sums[full] / counts[full, None]
        if not full.all():
            taken = set()
            order = np.argsort(-d2, kind="stable")
            for c in np.flatnonzero(~full):
                j = next(int(i) for i in order if int(i) not in taken)
                taken.add(j)
                C_new[c] = X[j]
        labels_new, d2_new = _assign(X, C_new)
        new_inertia = float(d2_new.sum())
        it += 1
        history.append(new_inertia)
        improvement = inertia - new_inertia
        C, labels, d2, inertia = C_new, labels_new, d2_new, new_inertia
        if improvement < tol:
            break
    return KMeansResult(C, labels.astype(np.int64), inertia, it, history)


def cluster_purity(assignments, labels) -> float:
    """Sum over clusters of the majority-label count, divided by n."""
    a = np.asarray(assignments)
    b = np.asarray(labels)
    if a.shape != b.shape:
        raise ValueError("assignments and labels differ in length")
    if a.size == 0:
        raise ValueError("empty input")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return float(table.max(axis=1).sum()) / a.size


def intersection_points(dataset):
    """One row per intersection: ids, (lat, lon) and city labels, by id."""
    inter = dataset.intersections()
    ids = np.array(sorted(inter), dtype=np.int64)
    pts = np.array([[inter[i][1], inter[i][2]] for i in ids], dtype=np.float64).reshape(-1, 2)
    city = np.array([inter[i][0] for i in ids], dtype=np.int64)
    return ids, pts, city


def cluster_intersections(dataset, k: int = 4, max_iters: int = 300, tol: float = 1e-10, seed: int = 0):
    """Cluster intersection coordinates; returns (ids, points, cities, result, purity)."""
    ids, pts, city = intersection_points(dataset)
    res = kmeans(pts, k, max_iters, tol, seed)
    return ids, pts, city, res, cluster_purity(res.assignments, city)
