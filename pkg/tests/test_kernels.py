"""The compiled and numpy backends must agree bit for bit."""
import numpy as np
import pytest

from congestion import _kernels, _pykernels
from congestion.models import gbt_fit, knn_fit

compiled_only = pytest.mark.skipif("compiled" not in _kernels.available_backends(),
                                   reason="compiled extension not built")


def test_backend_selector():
    assert "python" in _kernels.available_backends()
    with pytest.raises(ValueError):
        _kernels.set_backend("fortran")


def _with(name, fn):
    before = _kernels.backend_name()
    _kernels.set_backend(name)
    try:
        return fn()
    finally:
        _kernels.set_backend(before)


@compiled_only
def test_gbt_identical_across_backends():
    rng = np.random.default_rng(1)
    X = np.round(rng.random((600, 6)), 2)  # rounding creates ties
    y = X[:, 0] * 3 + np.sin(X[:, 1] * 6) + rng.normal(0, 0.2, 600)
    Q = rng.random((200, 6))
    a = _with("compiled", lambda: gbt_fit(X, y, n_estimators=20))
    b = _with("python", lambda: gbt_fit(X, y, n_estimators=20))
    assert a.train_mse == b.train_mse
    for ta, tb in zip(a.trees, b.trees):
        assert ta.to_dict() == tb.to_dict()
    pa = _with("compiled", lambda: a.predict(Q))
    pb = _with("python", lambda: a.predict(Q))
    assert np.array_equal(pa, pb)


@compiled_only
@pytest.mark.parametrize("metric", ["euclidean", "manhattan"])
@pytest.mark.parametrize("brute", [True, False])
def test_knn_identical_across_backends(metric, brute):
    rng = np.random.default_rng(2)
    X = np.round(rng.random((500, 4)), 1)  # many exact distance ties
    Q = np.round(rng.random((100, 4)), 1)
    m = knn_fit(X, rng.random(500), metric)
    a = _with("compiled", lambda: m.neighbors(Q, 9, brute=brute))
    b = _with("python", lambda: m.neighbors(Q, 9, brute=brute))
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_python_split_level_simple():
    # one feature, values 0..5, residual jumps after 2 -> split at 2.5
    X = np.arange(6, dtype=float)[:, None]
    resid = np.array([-1, -1, -1, 1, 1, 1], dtype=float)
    orders = np.argsort(X, axis=0).T.copy()
    sv = X[orders[0], 0][None, :]
    feat, thr, gain = _pykernels.split_level(sv, orders, np.zeros(6, dtype=np.int64), resid, 1,
                                             np.array([6.0]), np.array([0.0]), 1)
    assert feat.tolist() == [0] and thr.tolist() == [2.5] and gain[0] == pytest.approx(6.0)
