"""Kernel backend selection.

The compiled ``_ckernels`` extension is used when it imports; otherwise
the numpy fallback in ``_pykernels`` is used. ``set_backend`` switches
explicitly (benchmarks and backend-equivalence tests use it).
"""
from __future__ import annotations

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["compiled"] = _ckernels

_active = _BACKENDS.get("compiled", _pykernels)


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def backend_name() -> str:
    return "compiled" if _active is _ckernels and _ckernels is not None else "python"


def set_backend(name: str) -> None:
    global _active
    try:
        _active = _BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} unavailable; have {available_backends()}") from None


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _i64(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def split_level(Xs, orders, node_of, resid, n_nodes, node_count, node_sum, min_leaf):
    """Best split per frontier node given column-sorted values ``Xs[f, j] = X[orders[f, j], f]``."""
    return _active.split_level(
        _f64(Xs), _i64(orders), _i64(node_of), _f64(resid), int(n_nodes),
        _i64(node_count), _f64(node_sum), int(min_leaf),
    )


def tree_predict(X, feature, threshold, left, right, value):
    return _active.tree_predict(_f64(X), _i64(feature), _f64(threshold), _i64(left), _i64(right), _f64(value))


def knn_brute(train, queries, k, metric):
    return _active.knn_brute(_f64(train), _f64(queries), int(k), int(metric))


def kdtree_query(data, perm, start, end, left, right, lo, hi, queries, k, metric):
    return _active.kdtree_query(
        _f64(data), _i64(perm), _i64(start), _i64(end), _i64(left), _i64(right),
        _f64(lo), _f64(hi), _f64(queries), int(k), int(metric),
    )
