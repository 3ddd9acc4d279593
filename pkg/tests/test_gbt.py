import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from congestion.models import GbtEnsemble, gbt_feature_importance, gbt_fit, gbt_predict, model_from_dict, model_to_dict


def walk_oracle(ens, X):
    """Row-by-row tree walk, independent of the vectorized kernels."""
    out = np.empty(len(X))
    for i, x in enumerate(X):
        total = ens.base_value
        for t in ens.trees:
            node = 0
            while t.left[node] >= 0:
                node = t.left[node] if x[t.feature[node]] <= t.threshold[node] else t.right[node]
            total = total + ens.learning_rate * t.value[node]
        out[i] = total
    return out


def test_zero_estimators_predicts_mean():
    y = np.array([1.0, 2.0, 6.0])
    ens = gbt_fit(np.zeros((3, 1)), y, n_estimators=0)
    assert gbt_predict(ens, [5.0]) == 3.0


def test_depth_zero_single_tree_is_mean():
    rng = np.random.default_rng(0)
    X, y = rng.random((20, 2)), rng.random(20)
    ens = gbt_fit(X, y, n_estimators=1, max_depth=0, learning_rate=1.0)
    assert np.allclose(ens.predict(X), y.mean())


def test_depth_one_step_exact_fit():
    x = np.array([-1.0, -1.0, 1.0, 1.0])[:, None]
    y = (x[:, 0] > 0).astype(float)
    ens = gbt_fit(x, y, n_estimators=1, max_depth=1, learning_rate=1.0, min_leaf=1)
    assert ens.train_mse[-1] == 0.0
    assert ens.trees[0].threshold[0] == 0.0


def test_single_split_importance():
    x = np.column_stack([np.zeros(10), np.zeros(10), np.zeros(10), np.repeat([0.0, 1.0], 5)])
    y = np.repeat([0.0, 4.0], 5)
    ens = gbt_fit(x, y, n_estimators=1, max_depth=1, min_leaf=1)
    assert gbt_feature_importance(ens).tolist() == [0.0, 0.0, 0.0, 1.0]


def test_no_split_importance_is_zero():
    ens = gbt_fit(np.zeros((5, 2)), np.arange(5.0), n_estimators=3)
    assert gbt_feature_importance(ens).tolist() == [0.0, 0.0]


def test_min_leaf_and_depth_honoured():
    rng = np.random.default_rng(1)
    X, y = rng.random((300, 3)), rng.random(300)
    ens = gbt_fit(X, y, n_estimators=10, max_depth=3, min_leaf=20)
    for t in ens.trees:
        assert t.depth() <= 3
        leaves = t.left < 0
        assert np.all(t.n_samples[leaves] >= 20)
        assert np.all(np.isfinite(t.value[leaves]))


def test_errors():
    with pytest.raises(ValueError):
        gbt_fit(np.zeros((0, 1)), [])
    with pytest.raises(ValueError):
        gbt_fit(np.zeros((3, 1)), [1, 2, 3], learning_rate=0.0)
    ens = gbt_fit(np.zeros((3, 2)), [1, 2, 3], n_estimators=1)
    with pytest.raises(ValueError):
        ens.predict(np.zeros((1, 3)))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4), st.floats(0.05, 1.0))
def test_train_mse_monotone_and_predict_matches(seed, depth, lr):
    rng = np.random.default_rng(seed)
    X = np.round(rng.random((150, 3)), 2)
    y = np.sin(X[:, 0] * 5) + X[:, 1] + rng.normal(0, 0.3, 150)
    ens = gbt_fit(X, y, n_estimators=25, max_depth=depth, learning_rate=lr, min_leaf=3)
    assert all(b <= a for a, b in zip(ens.train_mse, ens.train_mse[1:]))
    assert np.mean((ens.predict(X) - y) ** 2) == ens.train_mse[-1]
    assert np.array_equal(ens.predict(X), walk_oracle(ens, X))


def test_importance_sums_to_one():
    rng = np.random.default_rng(2)
    X = rng.random((200, 4))
    ens = gbt_fit(X, X[:, 0] * 4 + rng.normal(0, 0.1, 200), n_estimators=20)
    imp = gbt_feature_importance(ens)
    assert abs(imp.sum() - 1.0) < 1e-12 and np.all(imp >= 0)
    assert imp[0] > 0.9


def test_json_roundtrip_bit_identical():
    rng = np.random.default_rng(3)
    X, y = rng.random((100, 3)), rng.random(100)
    ens = gbt_fit(X, y, n_estimators=15)
    back = model_from_dict(json.loads(json.dumps(model_to_dict(ens))))
    assert isinstance(back, GbtEnsemble)
    assert np.array_equal(back.predict(X), ens.predict(X))
