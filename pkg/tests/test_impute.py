import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from congestion.errors import ConfigError
from congestion.impute import (
    UNKNOWN, LowRankModel, argmax_category, evaluate_imputation, fit_low_rank, impute_missing, impute_streets,
    objective,
)


def rank2(n=30, m=20, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, 2)) @ rng.normal(size=(2, m))


def test_full_rank2_recovery():
    A = rank2()
    model = fit_low_rank(A, rank=2, max_iters=500)
    err = np.linalg.norm(model.reconstruct() - A) / np.linalg.norm(A)
    assert err < 1e-6


def test_masked_rank2_recovery():
    A = rank2(seed=1)
    mask = np.random.default_rng(2).random(A.shape) > 0.2
    model = fit_low_rank(np.where(mask, A, np.nan), rank=2, max_iters=500)
    done = impute_missing(model)
    assert np.abs(done - A)[~mask].max() < 1e-4
    assert np.array_equal(done[mask], A[mask])


def test_rank_one_completion_example():
    model = fit_low_rank([[1.0, 2.0], [2.0, np.nan]], rank=1, max_iters=2000, tol=1e-15)
    assert impute_missing(model)[1, 1] == pytest.approx(4.0, abs=1e-4)


def test_no_missing_is_identity():
    A = np.arange(12.0).reshape(4, 3)
    assert np.array_equal(impute_missing(fit_low_rank(A, rank=1, max_iters=5)), A)


@pytest.mark.parametrize("kw", [dict(rank=0), dict(rank=5), dict(loss="poisson"), dict(regularizer="l3"),
                                dict(lam=-1.0)])
def test_config_errors(kw):
    A = np.arange(12.0).reshape(4, 3)
    args = dict(rank=1)
    args.update(kw)
    with pytest.raises(ConfigError):
        fit_low_rank(A, **args)


def test_empty_row_or_column_rejected():
    A = np.ones((3, 3))
    A[1, :] = np.nan
    with pytest.raises(ConfigError):
        fit_low_rank(A, rank=1)
    with pytest.raises(ConfigError):
        fit_low_rank(np.ones((3, 3)).T * np.array([1, np.nan, 1]), rank=1)


def test_argmax_category():
    assert argmax_category([0.1, 0.9, 0.0], [1, 2, 3]) == 2
    assert argmax_category([0.5, 0.5], [7, 9]) == 7


def _mixed(seed=0):
    rng = np.random.default_rng(seed)
    n = 40
    cats = rng.integers(1, 4, n).astype(float)
    real = cats * 0.5 + rng.normal(0, 0.05, n)
    other = rng.normal(size=n)
    X = np.column_stack([cats, real, other])
    X[rng.choice(n, 6, replace=False), 0] = np.nan
    return X


@pytest.mark.parametrize("loss", ["quadratic", "huber", "one_vs_all", "multinomial"])
@pytest.mark.parametrize("reg", ["none", "l2", "l1"])
def test_objective_trace_monotone(loss, reg):
    X = _mixed()
    model = fit_low_rank(X, rank=2, loss=loss, regularizer=reg, lam=0.05, max_iters=40,
                         column_kinds=["nominal", "real", "real"], tol=0)
    t = np.array(model.objective_trace)
    assert np.all(np.diff(t) <= 1e-9 * np.maximum(1.0, np.abs(t[:-1])))
    assert objective(model) == pytest.approx(t[-1], rel=1e-9)
    done = impute_missing(model)
    assert set(np.unique(done[:, 0])) <= {1.0, 2.0, 3.0}


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 10.0))
def test_scale_invariance_of_reconstruction(c):
    model = fit_low_rank(rank2(8, 6), rank=2, max_iters=20)
    Z = model.reconstruct()
    model.U, model.V = model.U * c, model.V / c
    assert np.allclose(model.reconstruct(), Z, rtol=1e-10, atol=1e-10)


def test_l2_shrinks_factors():
    A = rank2(seed=3)
    norms = []
    for lam in (0.0, 1.0, 10.0, 100.0):
        m = fit_low_rank(A, rank=2, regularizer="l2", lam=lam, max_iters=300)
        norms.append(np.linalg.norm(m.U) ** 2 + np.linalg.norm(m.V) ** 2)
    assert all(a >= b for a, b in zip(norms, norms[1:]))


def test_model_json_roundtrip(tmp_path):
    model = fit_low_rank(_mixed(), rank=2, loss="multinomial", regularizer="l2", lam=0.1, max_iters=10,
                         column_kinds=["nominal", "real", "real"])
    path = tmp_path / "m.json"
    model.save(path)
    back = LowRankModel.load(path)
    assert np.array_equal(back.U, model.U) and np.array_equal(back.V, model.V)
    assert np.array_equal(impute_missing(back), impute_missing(model), equal_nan=True)
    json.loads(path.read_text())


def _controlled_model():
    X = np.array([[1.0, 0.1], [2.0, 0.2], [np.nan, 0.3], [np.nan, 0.4], [1.0, 0.5]])
    model = fit_low_rank(X, rank=1, max_iters=5, column_kinds=["nominal", "real"])
    guesses = impute_missing(model)[[2, 3], 0]
    return model, guesses


def test_evaluate_imputation_boundaries():
    model, g = _controlled_model()
    other = lambda v: 2.0 if v == 1.0 else 1.0
    right = [(2, 0, g[0]), (3, 0, g[1])]
    wrong = [(2, 0, other(g[0])), (3, 0, other(g[1]))]
    half = [right[0], wrong[1]]
    assert evaluate_imputation(model, right).categorical_error_rate == 0.0
    assert evaluate_imputation(model, right).passed is True
    rep = evaluate_imputation(model, wrong)
    assert rep.categorical_error_rate == 1.0 and rep.passed is False
    rep = evaluate_imputation(model, half, threshold=0.5)
    assert rep.categorical_error_rate == 0.5 and rep.passed is False
    assert evaluate_imputation(model, half, threshold=0.51).passed is True


def test_evaluate_imputation_rejects_bad_holdout():
    model, _ = _controlled_model()
    with pytest.raises(ValueError):
        evaluate_imputation(model, [])
    with pytest.raises(ValueError):
        evaluate_imputation(model, [(0, 0, 1.0)])


def test_impute_streets_fills_every_name(small_dataset):
    n_missing = sum((r.entry_street is None) + (r.exit_street is None) for r in small_dataset.records)
    assert n_missing > 0
    res = impute_streets(small_dataset, max_iters=10)
    assert all(r.entry_street is not None and r.exit_street is not None for r in res.dataset.records)
    assert len(res.cities) == 4
    for c in res.cities:
        assert c.filled_with in ("imputed", "unknown", "none")
        if c.report is not None:
            assert c.filled_with != "imputed" or c.report.passed
            assert c.filled_with != "unknown" or not c.report.passed
    # observed names are untouched
    for a, b in zip(small_dataset.records, res.dataset.records):
        if a.entry_street is not None:
            assert a.entry_street == b.entry_street
    doc = json.dumps(res.to_dict())
    assert "filled_with" in doc
    if any(c.filled_with == "unknown" for c in res.cities):
        assert any(r.entry_street == UNKNOWN or r.exit_street == UNKNOWN for r in res.dataset.records)
