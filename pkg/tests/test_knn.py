import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from congestion.models import knn_fit, knn_predict
from congestion.models.knn import KDTREE_MAX_DIM


def brute_oracle(train, queries, k, metric):
    """Sort every (distance, index) pair per query.

    Distances are accumulated dimension by dimension in column order and
    ranked before any square root, which is the arithmetic the model
    defines; exact ties then fall to the lower training index.
    """
    idx = np.empty((len(queries), k), dtype=np.int64)
    for q, x in enumerate(queries):
        acc = [0.0] * len(train)
        for i, row in enumerate(train):
            for a, b in zip(x.tolist(), row.tolist()):
                acc[i] += (a - b) * (a - b) if metric == "euclidean" else abs(a - b)
        idx[q] = sorted(range(len(train)), key=lambda i: (acc[i], i))[:k]
    return idx


def test_self_neighbour_returns_own_target():
    rng = np.random.default_rng(0)
    X = rng.random((200, 3))
    y = rng.random(200)
    m = knn_fit(X, y)
    assert np.array_equal(m.predict(X, 1), y)


def test_single_row_any_k():
    m = knn_fit(np.array([[1.0, 2.0]]), [5.0])
    assert knn_predict(m, [9.0, 9.0], 1) == 5.0


def test_k_equals_n_is_global_mean():
    rng = np.random.default_rng(1)
    X, y = rng.random((30, 2)), rng.random(30)
    assert knn_fit(X, y).predict(rng.random((4, 2)), 30) == pytest.approx(np.full(4, y.mean()))


def test_equidistant_tie_takes_lower_index():
    m = knn_fit(np.array([[-1.0], [1.0]]), [0.0, 10.0])
    assert knn_predict(m, [0.0], 1) == 0.0
    m2 = knn_fit(np.array([[1.0], [-1.0]]), [10.0, 0.0])
    assert knn_predict(m2, [0.0], 1) == 10.0


def test_k_out_of_range():
    m = knn_fit(np.zeros((3, 1)), [1, 2, 3])
    for k in (0, 4):
        with pytest.raises(ValueError):
            m.predict(np.zeros((1, 1)), k)


def test_empty_training_set():
    with pytest.raises(ValueError):
        knn_fit(np.zeros((0, 2)), [])


def test_inverse_distance_weights():
    m = knn_fit(np.array([[0.0], [3.0]]), [0.0, 6.0], weighting="inverse_distance")
    w1, w2 = 1 / (1 + 1e-12), 1 / (2 + 1e-12)
    assert knn_predict(m, [1.0], 2) == pytest.approx((w2 * 6.0) / (w1 + w2), rel=1e-12)


def test_high_dimension_uses_brute_force():
    m = knn_fit(np.zeros((5, KDTREE_MAX_DIM + 1)), np.arange(5))
    assert m.index is None
    assert knn_fit(np.zeros((5, KDTREE_MAX_DIM)), np.arange(5)).index is not None


@pytest.mark.parametrize("metric", ["euclidean", "manhattan"])
def test_index_matches_oracle(metric, backend):
    rng = np.random.default_rng(5)
    X = np.round(rng.random((400, 3)), 1)
    Q = np.round(rng.random((100, 3)), 1)
    m = knn_fit(X, rng.random(400), metric)
    for k in (1, 7, 8):
        idx, _ = m.neighbors(Q, k)
        assert np.array_equal(idx, brute_oracle(X, Q, k, metric))
        bidx, _ = m.neighbors(Q, k, brute=True)
        assert np.array_equal(bidx, idx)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 60), st.integers(1, 5), st.integers(1, 10))
def test_index_matches_oracle_property(seed, n, d, k):
    rng = np.random.default_rng(seed)
    k = min(k, n)
    X = np.round(rng.normal(size=(n, d)), 1)
    Q = np.round(rng.normal(size=(10, d)), 1)
    m = knn_fit(X, rng.random(n))
    assert np.array_equal(m.neighbors(Q, k)[0], brute_oracle(X, Q, k, "euclidean"))


def test_threads_do_not_change_results():
    rng = np.random.default_rng(6)
    X, y = rng.random((400, 4)), rng.random(400)
    Q = rng.random((333, 4))
    m = knn_fit(X, y)
    assert np.array_equal(m.predict(Q, 7, threads=1), m.predict(Q, 7, threads=8))


def test_uniform_prediction_permutation_invariant():
    rng = np.random.default_rng(7)
    X, y = rng.random((100, 2)), rng.random(100)
    Q = rng.random((20, 2))
    perm = rng.permutation(100)
    a = knn_fit(X, y).predict(Q, 5)
    b = knn_fit(X[perm], y[perm]).predict(Q, 5)
    assert np.allclose(a, b, rtol=0, atol=1e-15)
