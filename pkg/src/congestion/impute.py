"""Low-rank matrix factorization for filling missing (street-name) entries.

A partially observed ``n x m`` matrix ``A`` is approximated by ``U @ V``
with ``U`` ``n x rank`` and ``V`` ``rank x m``. Fitting alternates between
updating every row of ``U`` with ``V`` fixed and every column of ``V`` with
``U`` fixed. Each half-step solves a batch of small weighted ridge systems:

* quadratic loss: the exact least-squares solve;
* huber: iteratively reweighted least squares, weights ``min(1, delta/|r|)``;
* one_vs_all (logistic per category) and multinomial (softmax per nominal
  column): majorize-minimize steps with fixed curvature 1/4 and 1/2.

All of these never increase the objective.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError

LOSSES = ("quadratic", "huber", "multinomial", "one_vs_all")
REGULARIZERS = ("none", "l2", "l1")

# expanded-column loss codes
_QUAD, _HUBER, _OVA, _MNL = 0, 1, 2, 3


@dataclass
class ColumnBlock:
    """Original column -> its slice of the expanded matrix."""

    kind: str  # "real" | "nominal"
    start: int
    stop: int
    categories: list = field(default_factory=list)  # nominal: observed codes, ascending


@dataclass
class LowRankModel:
    U: np.ndarray
    V: np.ndarray
    rank: int
    loss: str
    regularizer: str
    lam: float
    delta: float
    objective_trace: list[float]
    seed: int
    data: np.ndarray
    mask: np.ndarray
    blocks: list[ColumnBlock]

    def reconstruct(self) -> np.ndarray:
        """Raw scores ``U @ V`` in the expanded column space."""
        return self.U @ self.V

    def to_dict(self) -> dict:
        return {
            "format": "congestion.lowrank/1",
            "U": self.U.tolist(),
            "V": self.V.tolist(),
            "rank": self.rank,
            "loss": self.loss,
            "regularizer": self.regularizer,
            "lam": self.lam,
            "delta": self.delta,
            "objective_trace": list(self.objective_trace),
            "seed": self.seed,
            "data": np.where(self.mask, self.data, 0.0).tolist(),
            "mask": self.mask.astype(int).tolist(),
            "blocks": [
                {"kind": b.kind, "start": b.start, "stop": b.stop, "categories": [float(c) for c in b.categories]}
                for b in self.blocks
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LowRankModel":
        if d.get("format") != "congestion.lowrank/1":
            raise ValueError("not a low-rank model document")
        mask = np.asarray(d["mask"], dtype=bool)
        data = np.asarray(d["data"], dtype=np.float64)
        data = np.where(mask, data, np.nan)
        return cls(
            np.asarray(d["U"], dtype=np.float64).reshape(len(mask), -1),
            np.asarray(d["V"], dtype=np.float64).reshape(d["rank"], -1),
            d["rank"], d["loss"], d["regularizer"], d["lam"], d["delta"], list(d["objective_trace"]),
            d["seed"], data, mask, [ColumnBlock(**b) for b in d["blocks"]],
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "LowRankModel":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _expand(data, mask, loss, column_kinds):
    """Build the expanded target matrix, mask, per-column loss codes and
    softmax group ids (-1 outside multinomial groups)."""
    n, m = data.shape
    kinds = list(column_kinds) if column_kinds is not None else ["real"] * m
    if len(kinds) != m:
        raise ConfigError("column_kinds must list one kind per column")
    cols, masks, codes, groups, blocks = [], [], [], [], []
    width = 0
    for j, kind in enumerate(kinds):
        if kind not in ("real", "nominal"):
            raise ConfigError(f"column kind must be 'real' or 'nominal', got {kind!r}")
        obs = mask[:, j]
        if kind == "nominal" and loss in ("multinomial", "one_vs_all"):
            cats = sorted(set(data[obs, j].tolist()))
            for c in cats:
                hit = (data[:, j] == c) & obs
                if loss == "one_vs_all":
                    cols.append(np.where(hit, 1.0, -1.0))
                    codes.append(_OVA)
                    groups.append(-1)
                else:
                    cols.append(hit.astype(np.float64))
                    codes.append(_MNL)
                    groups.append(j)
                masks.append(obs)
            blocks.append(ColumnBlock(kind, width, width + len(cats), cats))
            width += len(cats)
        else:
            cols.append(np.where(obs, data[:, j], 0.0))
            masks.append(obs)
            codes.append(_HUBER if loss == "huber" else _QUAD)
            groups.append(-1)
            cats = sorted(set(data[obs, j].tolist())) if kind == "nominal" else []
            blocks.append(ColumnBlock(kind, width, width + 1, cats))
            width += 1
    A = np.column_stack(cols)
    M = np.column_stack(masks)
    return A, M, np.asarray(codes), np.asarray(groups), blocks


def _runs(codes, groups):
    """Contiguous (code, start, stop) runs; each multinomial group is one run."""
    out = []
    for j, (c, g) in enumerate(zip(codes.tolist(), groups.tolist())):
        if out and out[-1][0] == c and (c != _MNL or groups[out[-1][1]] == g):
            out[-1][2] = j + 1
        else:
            out.append([c, j, j + 1])
    return [tuple(r) for r in out]


def _softmax(s):
    s = s - s.max(axis=1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=1, keepdims=True)


def _loss_total(A, M, Z, runs, delta):
    total = 0.0
    for code, a, b in runs:
        obs = M[:, a:b]
        if code == _MNL:
            rows = obs[:, 0]
            s = Z[rows, a:b]
            lse = np.logaddexp.reduce(s, axis=1)
            total += float(np.sum(lse - np.sum(s * A[rows, a:b], axis=1)))
            continue
        r = (A[:, a:b] - Z[:, a:b])[obs]
        if code == _QUAD:
            total += 0.5 * float(r @ r)
        elif code == _HUBER:
            r = np.abs(r)
            total += float(np.sum(np.where(r <= delta, 0.5 * r * r, delta * (r - 0.5 * delta))))
        else:
            total += float(np.sum(np.logaddexp(0.0, -(A[:, a:b] * Z[:, a:b])[obs])))
    return total


def _reg_total(F, regularizer, lam):
    if regularizer == "l2":
        return lam * float(np.sum(F * F))
    if regularizer == "l1":
        return lam * float(np.sum(np.abs(F)))
    return 0.0


def objective(model: "LowRankModel") -> float:
    """Regularized objective of a fitted model at its current factors."""
    A, M, codes, groups, _ = _expand(model.data, model.mask, model.loss, [b.kind for b in model.blocks])
    return (_loss_total(A, M, model.U @ model.V, _runs(codes, groups), model.delta)
            + _reg_total(model.U, model.regularizer, model.lam) + _reg_total(model.V, model.regularizer, model.lam))


def _working(A, M, Z, runs, delta):
    """Curvature weights C and working targets T; the half-step solves
    min sum C * (u.v - T)^2 / 2 + reg."""
    C = np.empty_like(Z)
    T = np.empty_like(Z)
    for code, a, b in runs:
        if code == _QUAD:
            C[:, a:b] = 1.0
            T[:, a:b] = A[:, a:b]
        elif code == _HUBER:
            r = np.abs(A[:, a:b] - Z[:, a:b])
            C[:, a:b] = np.where(r <= delta, 1.0, delta / np.maximum(r, np.finfo(float).tiny))
            T[:, a:b] = A[:, a:b]
        elif code == _OVA:
            y, z = A[:, a:b], Z[:, a:b]
            C[:, a:b] = 0.25
            T[:, a:b] = z + 2.0 * y * (1.0 + np.tanh(-0.5 * y * z))  # z + 4 y sigmoid(-y z)
        else:
            C[:, a:b] = 0.5
            T[:, a:b] = Z[:, a:b] - 2.0 * (_softmax(Z[:, a:b]) - A[:, a:b])
    C *= M
    return C, T


def _solve_rows(F, C, T, regularizer, lam, current):
    """For every row i solve (F^T diag(C_i) F + R_i) x_i = F^T (C_i * T_i).

    ``F`` is the fixed factor (m x r); returns the new n x r factor.
    """
    r = F.shape[1]
    G = np.einsum("ij,jk,jl->ikl", C, F, F, optimize=True)
    b = (C * T) @ F
    if regularizer == "l2":
        G = G + 2.0 * lam * np.eye(r)
    elif regularizer == "l1":
        w = lam / np.maximum(np.abs(current), 1e-12)
        G = G + w[:, :, None] * np.eye(r)
    try:
        return np.linalg.solve(G, b[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError:
        return np.einsum("ikl,il->ik", np.linalg.pinv(G), b)


def fit_low_rank(
    observed,
    mask=None,
    rank: int = 2,
    loss: str = "quadratic",
    regularizer: str = "none",
    lam: float = 0.0,
    delta: float = 1.0,
    max_iters: int = 500,
    tol: float = 1e-9,
    seed: int = 0,
    column_kinds: Optional[Sequence[str]] = None,
    inner_iters: int = 5,
) -> LowRankModel:
    """Fit ``observed ~ U @ V`` on the entries where ``mask`` is true.

    ``mask`` defaults to the finite entries. ``column_kinds`` marks columns
    as ``"real"`` or ``"nominal"`` (integer category codes); nominal columns
    expand to one score column per observed category under the
    multinomial and one_vs_all losses. Stops when the relative objective
    decrease falls below ``tol`` or after ``max_iters`` sweeps.
    """
    data = np.asarray(observed, dtype=np.float64)
    if data.ndim != 2:
        raise ConfigError("observed must be a 2-D matrix")
    M0 = np.isfinite(data) if mask is None else np.asarray(mask, dtype=bool)
    if M0.shape != data.shape:
        raise ConfigError("mask shape must match the matrix")
    n, m = data.shape
    if not 1 <= rank <= min(n, m):
        raise ConfigError(f"rank must be in [1, {min(n, m)}], got {rank}")
    if loss not in LOSSES:
        raise ConfigError(f"loss must be one of {LOSSES}")
    if regularizer not in REGULARIZERS:
        raise ConfigError(f"regularizer must be one of {REGULARIZERS}")
    if lam < 0:
        raise ConfigError("lam must be >= 0")
    if loss == "huber" and not delta > 0:
        raise ConfigError("huber delta must be positive")
    empty_rows = np.flatnonzero(~M0.any(axis=1))
    empty_cols = np.flatnonzero(~M0.any(axis=0))
    if len(empty_rows):
        raise ConfigError(f"rows without observed entries: {empty_rows[:10].tolist()}")
    if len(empty_cols):
        raise ConfigError(f"columns without observed entries: {empty_cols[:10].tolist()}")
    if not np.all(np.isfinite(data[M0])):
        raise ConfigError("observed entries must be finite")

    A, M, codes, groups, blocks = _expand(data, M0, loss, column_kinds)
    runs = _runs(codes, groups)
    rng = np.random.default_rng(seed)
    U = rng.uniform(-0.01, 0.01, (n, rank))
    V = rng.uniform(-0.01, 0.01, (rank, A.shape[1]))
    # IRLS reweighting needs a few passes per half-step; every other
    # surrogate already decreases the objective after one solve
    inner = max(1, inner_iters) if loss == "huber" else 1

    def total(U, V):
        return _loss_total(A, M, U @ V, runs, delta) + _reg_total(U, regularizer, lam) + _reg_total(V, regularizer, lam)

    trace = [total(U, V)]
    for _ in range(max_iters):
        for _ in range(inner):
            C, T = _working(A, M, U @ V, runs, delta)
            U = _solve_rows(V.T, C, T, regularizer, lam, U)
        for _ in range(inner):
            C, T = _working(A, M, U @ V, runs, delta)
            V = _solve_rows(U, C.T, T.T, regularizer, lam, V.T).T
        cur = total(U, V)
        prev = trace[-1]
        trace.append(cur)
        if cur <= 1e-28 or abs(prev - cur) <= tol * max(abs(prev), 1e-300):
            break
    data_kept = np.where(M0, data, np.nan)
    return LowRankModel(U, V, rank, loss, regularizer, float(lam), float(delta), trace, seed, data_kept, M0, blocks)


def argmax_category(scores, codes):
    """Category code with the highest score (first one on ties)."""
    scores = np.asarray(scores, dtype=np.float64)
    return codes[int(np.argmax(scores))]


def _nearest_code(value, codes):
    codes = np.asarray(codes, dtype=np.float64)
    return float(codes[int(np.argmin(np.abs(codes - value)))])


def impute_missing(model: LowRankModel, column_kinds: Optional[Sequence[str]] = None) -> np.ndarray:
    """Completed matrix in the original column layout.

    Observed entries pass through unchanged. Real columns take ``u_i . v_j``;
    nominal columns take the best-scoring category (multinomial/one_vs_all)
    or the observed code closest to the reconstructed value.
    """
    kinds = list(column_kinds) if column_kinds is not None else [b.kind for b in model.blocks]
    Z = model.reconstruct()
    out = np.array(model.data, dtype=np.float64)
    missing = ~model.mask
    for j, (b, kind) in enumerate(zip(model.blocks, kinds)):
        rows = np.flatnonzero(missing[:, j])
        if not len(rows):
            continue
        if kind == "nominal" and model.loss in ("multinomial", "one_vs_all"):
            scores = Z[rows, b.start:b.stop]
            out[rows, j] = [argmax_category(s, b.categories) for s in scores]
        elif kind == "nominal" and b.categories:
            out[rows, j] = [_nearest_code(v, b.categories) for v in Z[rows, b.start]]
        else:
            out[rows, j] = Z[rows, b.start]
    return out


@dataclass
class ImputationReport:
    categorical_error_rate: Optional[float]
    numeric_rmse: Optional[float]
    n_categorical: int
    n_numeric: int
    threshold: float
    passed: bool


def evaluate_imputation(model: LowRankModel, holdout, threshold: float = 0.5,
                        rmse_threshold: Optional[float] = None) -> ImputationReport:
    """Score imputations of entries hidden at fit time.

    ``holdout`` is a sequence of ``(row, column, true_value)``. The verdict
    passes when the categorical error rate is strictly below ``threshold``
    (and, when given and numeric entries exist, the RMSE strictly below
    ``rmse_threshold``).
    """
    holdout = list(holdout)
    if not holdout:
        raise ValueError("empty holdout")
    for i, j, _ in holdout:
        if model.mask[int(i), int(j)]:
            raise ValueError(f"holdout entry ({i}, {j}) was observed at fit time")
    completed = impute_missing(model)
    kinds = [b.kind for b in model.blocks]
    wrong = n_cat = 0
    sq = []
    for i, j, truth in holdout:
        guess = completed[int(i), int(j)]
        if kinds[int(j)] == "nominal":
            n_cat += 1
            wrong += guess != truth
        else:
            sq.append((guess - truth) ** 2)
    rate = float(wrong) / n_cat if n_cat else None
    rmse = float(np.sqrt(np.mean(sq))) if sq else None
    passed = True
    if rate is not None:
        passed = rate < threshold
    if rmse is not None and rmse_threshold is not None:
        passed = passed and rmse < rmse_threshold
    return ImputationReport(rate, rmse, n_cat, len(sq), threshold, bool(passed))


# --- per-city street-name pipeline -------------------------------------------

UNKNOWN = "Unknown"


@dataclass
class CityImputation:
    city: int
    n_rows: int
    n_missing: int
    report: Optional[ImputationReport]
    filled_with: str  # "imputed" | "unknown" | "none"


@dataclass
class StreetImputation:
    dataset: "object"
    cities: list[CityImputation]

    def to_dict(self) -> dict:
        out = []
        for c in self.cities:
            rep = None
            if c.report is not None:
                rep = {
                    "categorical_error_rate": c.report.categorical_error_rate,
                    "n_categorical": c.report.n_categorical,
                    "threshold": c.report.threshold,
                    "passed": c.report.passed,
                }
            out.append({"city": c.city, "n_rows": c.n_rows, "n_missing": c.n_missing, "report": rep,
                        "filled_with": c.filled_with})
        return {"cities": out}


def _city_matrix(records):
    """Label-encoded street columns plus the always-observed context columns
    (headings, hour, scaled coordinates)."""
    names = sorted({s for r in records for s in (r.entry_street, r.exit_street) if s is not None})
    code = {s: i + 1 for i, s in enumerate(names)}
    n = len(records)
    X = np.empty((n, 7))
    X[:, 0] = [code.get(r.entry_street, np.nan) if r.entry_street is not None else np.nan for r in records]
    X[:, 1] = [code.get(r.exit_street, np.nan) if r.exit_street is not None else np.nan for r in records]
    X[:, 2] = [r.entry_heading.code / 7.0 for r in records]
    X[:, 3] = [r.exit_heading.code / 7.0 for r in records]
    X[:, 4] = [r.hour / 23.0 for r in records]
    for j, attr in ((5, "latitude"), (6, "longitude")):
        v = np.array([getattr(r, attr) for r in records])
        span = v.max() - v.min()
        X[:, j] = (v - v.min()) / span if span > 0 else 0.0
    return X, names


STREET_KINDS = ["nominal", "nominal", "real", "real", "real", "real", "real"]


def impute_streets(dataset, rank: int = 3, loss: str = "multinomial", regularizer: str = "l2", lam: float = 0.1,
                   holdout_fraction: float = 0.1, threshold: float = 0.5, max_iters: int = 50, seed: int = 0):
    """Fill missing entry/exit street names city by city.

    For each city a fraction of the observed street cells is hidden and
    scored. If the categorical error rate is strictly below ``threshold`` the
    model is refit on every observed cell and missing names take the
    imputed street; otherwise every missing name becomes ``'Unknown'``.
    """
    from dataclasses import replace

    from .core_data import Dataset

    if not 0.0 < holdout_fraction < 1.0:
        raise ConfigError("holdout_fraction must be in (0, 1)")
    records = list(dataset.records)
    rng = np.random.default_rng(seed)
    reports = []
    city_of = np.array([r.city for r in records])
    for city in np.unique(city_of):
        idx = np.flatnonzero(city_of == city)
        recs = [records[i] for i in idx]
        X, names = _city_matrix(recs)
        missing = ~np.isfinite(X[:, :2])
        n_missing = int(missing.sum())
        if not names:
            for i in idx:
                records[i] = replace(records[i], entry_street=records[i].entry_street or UNKNOWN,
                                     exit_street=records[i].exit_street or UNKNOWN)
            reports.append(CityImputation(int(city), len(idx), n_missing, None, "unknown" if n_missing else "none"))
            continue
        obs = np.argwhere(~missing)
        n_hold = max(1, int(round(holdout_fraction * len(obs))))
        hold = obs[rng.permutation(len(obs))[:n_hold]]
        mask = np.isfinite(X)
        mask[hold[:, 0], hold[:, 1]] = False
        # keep every column observed at least once
        for j in (0, 1):
            if not mask[:, j].any():
                mask[hold[hold[:, 1] == j][0][0], j] = True
        hold = [(i, j, X[i, j]) for i, j in hold if not mask[i, j]]
        r = min(rank, min(X.shape))
        model = fit_low_rank(X, mask, r, loss, regularizer, lam, max_iters=max_iters, seed=seed,
                             column_kinds=STREET_KINDS)
        report = evaluate_imputation(model, hold, threshold)
        if n_missing == 0:
            reports.append(CityImputation(int(city), len(idx), 0, report, "none"))
            continue
        if report.passed:
            full = fit_low_rank(X, np.isfinite(X), r, loss, regularizer, lam, max_iters=max_iters, seed=seed,
                                column_kinds=STREET_KINDS)
            done = impute_missing(full)
            fill = lambda v: names[int(v) - 1]
            how = "imputed"
        else:
            done = None
            fill = lambda v: UNKNOWN
            how = "unknown"
        for local, i in enumerate(idx):
            rec = records[i]
            entry, exit_ = rec.entry_street, rec.exit_street
            if entry is None:
                entry = fill(done[local, 0] if done is not None else 0)
            if exit_ is None:
                exit_ = fill(done[local, 1] if done is not None else 0)
            if entry is not rec.entry_street or exit_ is not rec.exit_street:
                records[i] = replace(rec, entry_street=entry, exit_street=exit_)
        reports.append(CityImputation(int(city), len(idx), n_missing, report, how))
    out = Dataset(tuple(records), dataset.provenance, dataset.warnings)
    return StreetImputation(out, reports)
