"""Least-squares and Huber linear regression, plus stepwise selection."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from ..errors import ConvergenceError, SingularMatrixError


@dataclass
class LinearModel:
    intercept: float
    coefficients: np.ndarray
    loss: str = "l2"
    delta: Optional[float] = None
    l2_penalty: float = 0.0
    selected_features: list[str] = field(default_factory=list)
    n_iter: int = 0
    input_columns: Optional[list[int]] = None  # columns of the full matrix the coefficients apply to

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=np.float64)
        if not self.selected_features:
            self.selected_features = [f"x{i}" for i in range(len(self.coefficients))]
        if len(self.selected_features) != len(self.coefficients):
            raise ValueError("coefficient count must equal selected feature count")

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if self.input_columns is not None:
            X = X[:, self.input_columns]
        if X.shape[1] != len(self.coefficients):
            raise ValueError(f"expected {len(self.coefficients)} features, got {X.shape[1]}")
        return self.intercept + X @ self.coefficients


def linear_predict(model: LinearModel, x_row) -> float:
    """Prediction for a single feature vector."""
    x = np.asarray(x_row, dtype=np.float64)
    if model.input_columns is not None:
        x = x[model.input_columns]
    if x.shape != model.coefficients.shape:
        raise ValueError(f"expected {len(model.coefficients)} features, got {x.size}")
    return float(model.intercept + x @ model.coefficients)


def _names(n, feature_names):
    return list(feature_names) if feature_names is not None else [f"x{i}" for i in range(n)]


def independent_columns(X, rtol: float = 1e-9) -> list[int]:
    """Indices of a maximal set of columns that, together with an
    intercept, are linearly independent.

    Columns are taken in order, so of a collinear group the later ones are
    dropped (the last one-hot level, a difference of two earlier columns).
    """
    X = np.asarray(X, dtype=np.float64)
    C = X - X.mean(axis=0)
    basis = []
    keep = []
    for j in range(C.shape[1]):
        v = C[:, j].copy()
        scale = np.linalg.norm(X[:, j])
        for _ in range(2):  # re-orthogonalize once for stability
            for q in basis:
                v -= (q @ v) * q
        norm = np.linalg.norm(v)
        if norm > rtol * max(scale, 1.0) * math.sqrt(len(v)):
            basis.append(v / norm)
            keep.append(j)
    return keep


def _check_xy(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("X and y must be finite")
    return X, y


def _weighted_ridge(X, y, w, lam, names):
    """Solve min sum w_i (y_i - b0 - x_i b)^2 + lam |b|^2 via pivoted QR.

    The intercept is not penalized. The ridge term enters as extra rows
    ``sqrt(lam) I`` so the normal equations are never formed.
    """
    n, p = X.shape
    sw = np.sqrt(w)
    A = np.empty((n, p + 1))
    A[:, 0] = sw
    A[:, 1:] = X * sw[:, None]
    b = y * sw
    if lam > 0:
        A = np.vstack([A, np.hstack([np.zeros((p, 1)), math.sqrt(lam) * np.eye(p)])])
        b = np.concatenate([b, np.zeros(p)])
    Q, R, piv = scipy.linalg.qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(A.shape) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    rank = int(np.sum(diag > tol))
    if rank < p + 1:
        labels = ["intercept"] + list(names)
        bad = [labels[j] for j in piv[rank:]]
        raise SingularMatrixError(f"design matrix is rank deficient; collinear columns: {bad}", columns=bad)
    z = scipy.linalg.solve_triangular(R, Q.T @ b)
    coef = np.empty(p + 1)
    coef[piv] = z
    return coef[0], coef[1:]


def fit_ols(X, y, l2_penalty: float = 0.0, feature_names: Optional[Sequence[str]] = None) -> LinearModel:
    """Ordinary (or ridge, when ``l2_penalty > 0``) least squares."""
    X, y = _check_xy(X, y)
    if l2_penalty < 0:
        raise ValueError("l2_penalty must be >= 0")
    names = _names(X.shape[1], feature_names)
    if l2_penalty == 0 and X.shape[0] <= X.shape[1]:
        raise SingularMatrixError(
            f"need more rows than columns without a penalty ({X.shape[0]} <= {X.shape[1]})", columns=names
        )
    b0, beta = _weighted_ridge(X, y, np.ones(len(y)), l2_penalty, names)
    return LinearModel(float(b0), beta, "l2", None, float(l2_penalty), names)


# --- Huber -----------------------------------------------------------------


def huber_rho(r, delta):
    a = np.abs(r)
    return np.where(a <= delta, 0.5 * r * r, delta * (a - 0.5 * delta))


def huber_psi(r, delta):
    return np.clip(r, -delta, delta)


def huber_objective(intercept, coefficients, X, y, delta, l2_penalty=0.0) -> float:
    """sum(rho_delta(y - yhat)) + l2_penalty * |coefficients|^2."""
    beta = np.asarray(coefficients, dtype=np.float64)
    r = y - intercept - X @ beta
    return float(np.sum(huber_rho(r, delta)) + l2_penalty * beta @ beta)


def huber_gradient(intercept, coefficients, X, y, delta, l2_penalty=0.0) -> np.ndarray:
    """Gradient w.r.t. (intercept, coefficients...)."""
    beta = np.asarray(coefficients, dtype=np.float64)
    r = y - intercept - X @ beta
    psi = huber_psi(r, delta)
    g = np.empty(len(beta) + 1)
    g[0] = -np.sum(psi)
    g[1:] = -(X.T @ psi) + 2.0 * l2_penalty * beta
    return g


def _newton_polish(X, y, b0, beta, delta, lam, gtol, max_steps=50):
    """Exact Newton steps on the piecewise-quadratic Huber objective.

    Inside a fixed inlier set the objective is quadratic, so once IRLS has
    identified the set a step or two drives the gradient to round-off.
    """
    n, p = X.shape
    A = np.hstack([np.ones((n, 1)), X])
    theta = np.concatenate([[b0], beta])
    pen = np.full(p + 1, 2.0 * lam)
    pen[0] = 0.0
    f = huber_objective(theta[0], theta[1:], X, y, delta, lam)
    for _ in range(max_steps):
        g = huber_gradient(theta[0], theta[1:], X, y, delta, lam)
        if np.linalg.norm(g) < gtol:
            break
        r = y - A @ theta
        inlier = (np.abs(r) <= delta).astype(np.float64)
        H = (A.T * inlier) @ A + np.diag(pen)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, g, rcond=None)[0]
        t = 1.0
        while t > 1e-10:
            cand = theta - t * step
            fc = huber_objective(cand[0], cand[1:], X, y, delta, lam)
            if fc <= f:
                break
            t *= 0.5
        else:
            break
        if np.array_equal(cand, theta):
            break
        theta, f = cand, fc
    return theta[0], theta[1:]


def fit_huber(
    X,
    y,
    delta: float = 1.0,
    l2_penalty: float = 0.0,
    max_iters: int = 200,
    tol: float = 1e-10,
    feature_names: Optional[Sequence[str]] = None,
    gtol: float = 1e-9,
) -> LinearModel:
    """Huber regression by iteratively reweighted least squares.

    Weights are ``min(1, delta/|r|)``. After the coefficient change drops
    below ``tol`` a few exact Newton steps remove the remaining linear-rate
    error. Raises :class:`ConvergenceError` (with the per-iteration change
    trace) when IRLS does not settle within ``max_iters``.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    X, y = _check_xy(X, y)
    names = _names(X.shape[1], feature_names)
    w = np.ones(len(y))
    b0, beta = _weighted_ridge(X, y, w, l2_penalty, names)
    trace = []
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        r = y - b0 - X @ beta
        a = np.abs(r)
        w = np.where(a <= delta, 1.0, delta / np.maximum(a, np.finfo(float).tiny))
        try:
            nb0, nbeta = _weighted_ridge(X, y, w, l2_penalty, names)
        except SingularMatrixError:
            # too few effective rows; IRLS cannot continue from here
            raise ConvergenceError("Huber IRLS hit a singular weighted system", trace) from None
        change = float(np.max(np.abs(np.concatenate([[nb0 - b0], nbeta - beta]))))
        scale = max(1.0, float(np.max(np.abs(np.concatenate([[nb0], nbeta])))))
        trace.append(change)
        b0, beta = nb0, nbeta
        if change <= tol * scale:
            converged = True
            break
    if not converged:
        raise ConvergenceError(f"Huber IRLS did not converge in {max_iters} iterations", trace)
    b0, beta = _newton_polish(X, y, b0, beta, delta, l2_penalty, gtol)
    return LinearModel(float(b0), beta, "huber", float(delta), float(l2_penalty), names, n_iter=it)


# --- stepwise --------------------------------------------------------------


@dataclass(frozen=True)
class StepRecord:
    step: int
    move: str  # "start" | "add" | "remove"
    feature: Optional[str]
    criterion: float


@dataclass
class StepwiseResult:
    selected: list[int]
    selected_names: list[str]
    trace: list[StepRecord]
    model: LinearModel


def _rss(X, y, cols):
    if cols:
        m = fit_ols(X[:, cols], y)
        resid = y - m.predict(X[:, cols])
    else:
        resid = y - y.mean()
    return float(resid @ resid)


def _criterion(X, y, cols, criterion):
    from ..evaluation import aic_bic

    n = len(y)
    rss = _rss(X, y, cols)
    ic = aic_bic(n, len(cols) + 1, rss)
    return ic.aic if criterion == "aic" else ic.bic


def stepwise_select(
    X,
    y,
    criterion: str = "aic",
    direction: str = "forward",
    max_steps: Optional[int] = None,
    feature_names: Optional[Sequence[str]] = None,
) -> StepwiseResult:
    """Greedy add/remove selection by AIC or BIC.

    Each step takes the single move that lowers the criterion most (ties:
    lowest feature index, adds before removes); stops when nothing improves.
    Forward and both start from the intercept-only model, backward from the
    full model.
    """
    if criterion not in ("aic", "bic"):
        raise ValueError("criterion must be 'aic' or 'bic'")
    if direction not in ("forward", "backward", "both"):
        raise ValueError("direction must be forward, backward or both")
    X, y = _check_xy(X, y)
    p = X.shape[1]
    names = _names(p, feature_names)
    if p < 1:
        raise ValueError("need at least one candidate feature")
    current = list(range(p)) if direction == "backward" else []
    score = _criterion(X, y, current, criterion)
    trace = [StepRecord(0, "start", None, score)]
    limit = max_steps if max_steps is not None else 2 * p + 1
    steps = 0
    while steps < limit:
        best = None
        if direction in ("forward", "both"):
            for j in range(p):
                if j in current:
                    continue
                cand = sorted(current + [j])
                try:
                    s = _criterion(X, y, cand, criterion)
                except SingularMatrixError:
                    continue
                if s < score and (best is None or s < best[0]):
                    best = (s, "add", j, cand)
        if direction in ("backward", "both"):
            for j in sorted(current):
                cand = [c for c in current if c != j]
                s = _criterion(X, y, cand, criterion)
                if s < score and (best is None or s < best[0]):
                    best = (s, "remove", j, cand)
        if best is None:
            break
        score, move, j, current = best
        steps += 1
        trace.append(StepRecord(steps, move, names[j], score))
    if current:
        model = fit_ols(X[:, current], y, feature_names=[names[c] for c in current])
    else:
        model = LinearModel(float(y.mean()), np.zeros(0), selected_features=[])
    return StepwiseResult(current, [names[c] for c in current], trace, model)
