"""Regression models for risk formation and propagation.

Binary logistic regression is fitted by iteratively reweighted least squares
(Newton steps with step-halving, so the log-likelihood never decreases);
multinomial logit by full Newton on the multinomial log-likelihood with the
first class as reference.  Standard errors come from the inverse observed
information, Wald z statistics and two-sided normal p-values from them.

The variable-selection protocol runs four stages: univariate significance,
pairwise-correlation pruning, backward elimination by AIC, and a VIF sweep.
Every removal is recorded in an ordered trace.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import DataError, NumericError


# ---------------------------------------------------------------------------
# Preprocessing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PreprocessSpec:
    """Knobs for the preprocessing pipeline.

    ``balance_ratio`` is the target majority:minority ratio after class
    down-sampling (binary labels only; ``None`` disables).  Winsorize bounds
    are percentiles computed on the full table before any row is removed.
    """

    winsor_lo: float = 1.0
    winsor_hi: float = 99.0
    balance_ratio: float | None = 4.0
    train_fraction: float = 0.7
    seed: int = 0
    discretize_bins: int | None = None


class Winsorizer(BaseEstimator, TransformerMixin):
    """Clip each column at fitted lower/upper percentiles."""

    def __init__(self, lo: float = 1.0, hi: float = 99.0):
        self.lo = lo
        self.hi = hi

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=float)
        self.lower_ = np.percentile(X, self.lo, axis=0)
        self.upper_ = np.percentile(X, self.hi, axis=0)
        return self

    def transform(self, X):
        return np.clip(np.asarray(X, dtype=float), self.lower_, self.upper_)


class ZScoreScaler(BaseEstimator, TransformerMixin):
    """Standardize columns to zero mean and unit (population) variance.

    Constant columns are left centered only so transforms never divide by
    zero.
    """

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=float)
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        self.scale_ = np.where(std > 0, std, 1.0)
        return self

    def transform(self, X):
        return (np.asarray(X, dtype=float) - self.mean_) / self.scale_


@dataclass
class PreprocessResult:
    X_train: np.ndarray
    y_train: np.ndarray
    X_val: np.ndarray
    y_val: np.ndarray
    feature_names: list[str]
    scaler: ZScoreScaler
    winsorizer: Winsorizer
    info: dict[str, Any]


def _stratified_split(y: np.ndarray, train_fraction: float, rng: np.random.Generator):
    train_idx, val_idx = [], []
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        perm = rng.permutation(idx)
        n_train = int(round(train_fraction * len(idx)))
        train_idx.extend(perm[:n_train])
        val_idx.extend(perm[n_train:])
    return np.sort(np.array(train_idx, dtype=int)), np.sort(np.array(val_idx, dtype=int))


def _equal_frequency_bins(X: np.ndarray, n_bins: int) -> np.ndarray:
    out = np.empty_like(X)
    qs = np.linspace(0, 100, n_bins + 1)[1:-1]
    for j in range(X.shape[1]):
        edges = np.unique(np.percentile(X[:, j], qs))
        out[:, j] = np.searchsorted(edges, X[:, j], side="right")
    return out


def preprocess(
    table: pd.DataFrame,
    spec: PreprocessSpec = PreprocessSpec(),
    *,
    feature_columns: Sequence[str] | None = None,
    label_column: str = "label",
    target_size: int | None = None,
) -> PreprocessResult:
    """Winsorize, rebalance, split, and normalize a feature table.

    Order of operations: winsorize on the full table, down-sample the
    majority class to the target ratio (binary only), optionally subsample
    to ``target_size`` (stratified; used to equalize datasets across
    prediction intervals), split stratified into train/validation, then
    z-score using training statistics only.
    """
    if label_column not in table.columns:
        raise DataError(f"feature table has no {label_column!r} column", module="modeling")
    if feature_columns is None:
        skip = {label_column, "t_s", "group_id", "trajectory_id"}
        feature_columns = [c for c in table.columns if c not in skip]
    feature_columns = list(feature_columns)

    y = table[label_column].to_numpy()
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2:
        raise DataError("feature table must contain at least two classes", module="modeling")
    if counts.min() < 10:
        lightest = classes[counts.argmin()]
        raise DataError(
            f"class {lightest!r} has only {counts.min()} rows (need >= 10)", module="modeling"
        )

    X = table[feature_columns].to_numpy(dtype=float)
    winsorizer = Winsorizer(spec.winsor_lo, spec.winsor_hi).fit(X)
    X = winsorizer.transform(X)
    if spec.discretize_bins:
        X = _equal_frequency_bins(X, spec.discretize_bins)

    rng = np.random.default_rng(spec.seed)
    keep = np.arange(len(y))
    dropped_majority = 0
    if spec.balance_ratio and len(classes) == 2:
        n_case = counts.min()
        minority = classes[counts.argmin()]
        majority_idx = np.flatnonzero(y != minority)
        case_idx = np.flatnonzero(y == minority)
        target = int(spec.balance_ratio * n_case)
        if len(majority_idx) > target:
            chosen = rng.choice(majority_idx, size=target, replace=False)
            keep = np.sort(np.concatenate([case_idx, chosen]))
            dropped_majority = len(majority_idx) - target
    X, y = X[keep], y[keep]

    if target_size is not None and target_size < len(y):
        # Stratified subsample preserving class proportions as closely as
        # integer rounding allows.
        frac = target_size / len(y)
        picked = []
        for cls in np.unique(y):
            idx = np.flatnonzero(y == cls)
            n_keep = max(1, int(round(frac * len(idx))))
            picked.extend(rng.choice(idx, size=min(n_keep, len(idx)), replace=False))
        keep2 = np.sort(np.array(picked, dtype=int))
        X, y = X[keep2], y[keep2]

    train_idx, val_idx = _stratified_split(y, spec.train_fraction, rng)
    scaler = ZScoreScaler().fit(X[train_idx])
    info = {
        "rows_total": int(len(table)),
        "rows_used": int(len(y)),
        "rows_train": int(len(train_idx)),
        "rows_validation": int(len(val_idx)),
        "dropped_majority_rows": int(dropped_majority),
        "class_counts": {str(c): int((y == c).sum()) for c in np.unique(y)},
        "seed": spec.seed,
    }
    return PreprocessResult(
        X_train=scaler.transform(X[train_idx]),
        y_train=y[train_idx],
        X_val=scaler.transform(X[val_idx]),
        y_val=y[val_idx],
        feature_names=feature_columns,
        scaler=scaler,
        winsorizer=winsorizer,
        info=info,
    )


# ---------------------------------------------------------------------------
# Binary logistic regression (IRLS)
# ---------------------------------------------------------------------------

def _sigmoid(eta: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * eta))


def _binary_loglik(eta: np.ndarray, y: np.ndarray) -> float:
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def _normal_sf(z):
    if np.isscalar(z) or np.ndim(z) == 0:
        return 0.5 * math.erfc(float(z) / math.sqrt(2.0))
    arr = np.asarray(z, dtype=float)
    return np.array([0.5 * math.erfc(v / math.sqrt(2.0)) for v in arr.ravel()]).reshape(arr.shape)


def _drop_constant(X: np.ndarray, names: list[str]):
    keep = [j for j in range(X.shape[1]) if np.ptp(X[:, j]) > 0]
    dropped = [names[j] for j in range(X.shape[1]) if j not in keep]
    return X[:, keep], [names[j] for j in keep], dropped


class BinaryLogisticRegression(BaseEstimator):
    """Maximum-likelihood logistic regression via IRLS.

    Newton steps with step-halving keep the log-likelihood non-decreasing;
    convergence is declared when the largest applied coefficient update falls
    below ``tol``.  Constant columns are removed before fitting.  Suspected
    perfect separation (any coefficient beyond ``separation_bound``) is
    flagged, not fatal.
    """

    def __init__(self, max_iter: int = 100, tol: float = 1e-8, separation_bound: float = 30.0):
        self.max_iter = max_iter
        self.tol = tol
        self.separation_bound = separation_bound

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or len(X) != len(y):
            raise DataError("X must be 2-D with one row per label", module="modeling")
        if not set(np.unique(y)) <= {0.0, 1.0}:
            raise DataError("binary logistic regression needs 0/1 labels", module="modeling")
        names = [f"x{j}" for j in range(X.shape[1])]
        Xr, kept, dropped = _drop_constant(X, names)
        self._kept_idx = [names.index(n) for n in kept]
        self.dropped_constant_ = dropped

        design = np.column_stack([np.ones(len(Xr)), Xr])
        if np.linalg.matrix_rank(design) < design.shape[1]:
            raise NumericError("design matrix is rank deficient", module="modeling")

        beta = np.zeros(design.shape[1])
        loglik = _binary_loglik(design @ beta, y)
        self.loglik_path_ = [loglik]
        converged = False
        for _ in range(self.max_iter):
            eta = design @ beta
            mu = np.clip(_sigmoid(eta), 1e-12, 1 - 1e-12)
            w = mu * (1.0 - mu)
            grad = design.T @ (y - mu)
            hess = design.T @ (design * w[:, None])
            try:
                step = np.linalg.solve(hess, grad)
            except np.linalg.LinAlgError as exc:
                raise NumericError(f"IRLS normal equations are singular: {exc}", module="modeling") from exc
            scale = 1.0
            for _ in range(40):
                candidate = beta + scale * step
                cand_ll = _binary_loglik(design @ candidate, y)
                if cand_ll >= loglik - 1e-12:
                    break
                scale *= 0.5
            beta = beta + scale * step
            new_ll = _binary_loglik(design @ beta, y)
            self.loglik_path_.append(new_ll)
            delta = float(np.max(np.abs(scale * step)))
            loglik = new_ll
            if delta < self.tol:
                converged = True
                break

        eta = design @ beta
        mu = np.clip(_sigmoid(eta), 1e-12, 1 - 1e-12)
        w = mu * (1.0 - mu)
        info = design.T @ (design * w[:, None])
        cov = np.linalg.inv(info)
        se = np.sqrt(np.diag(cov))
        z = beta / se
        self.intercept_ = float(beta[0])
        self.coef_ = beta[1:]
        self.se_intercept_ = float(se[0])
        self.se_ = se[1:]
        self.z_intercept_ = float(z[0])
        self.z_ = z[1:]
        self.p_intercept_ = float(_normal_sf(abs(z[0])) * 2)
        self.p_ = _normal_sf(np.abs(z[1:])) * 2
        self.loglik_ = loglik
        self.aic_ = 2 * design.shape[1] - 2 * loglik
        self.n_iter_ = len(self.loglik_path_) - 1
        self.converged_ = converged
        self.separation_ = bool(np.any(np.abs(beta) > self.separation_bound))
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        X = np.asarray(X, dtype=float)[:, self._kept_idx]
        return self.intercept_ + X @ self.coef_

    def predict_proba(self, X):
        p1 = _sigmoid(self.decision_function(X))
        return np.column_stack([1 - p1, p1])

    def predict(self, X, threshold: float = 0.5):
        return (_sigmoid(self.decision_function(X)) >= threshold).astype(int)


# ---------------------------------------------------------------------------
# Multinomial logistic regression (Newton)
# ---------------------------------------------------------------------------

class MultinomialLogisticRegression(BaseEstimator):
    """Maximum-likelihood multinomial logit with the first class as reference.

    One coefficient vector per non-reference class, estimated by full Newton
    iteration on the multinomial log-likelihood with step-halving.
    """

    def __init__(self, max_iter: int = 200, tol: float = 1e-6, separation_bound: float = 30.0):
        self.max_iter = max_iter
        self.tol = tol
        self.separation_bound = separation_bound

    def _probs(self, design: np.ndarray, B: np.ndarray) -> np.ndarray:
        eta = design @ B.T  # (n, K-1)
        full = np.column_stack([np.zeros(len(design)), eta])
        full -= full.max(axis=1, keepdims=True)
        expd = np.exp(full)
        return expd / expd.sum(axis=1, keepdims=True)

    def _loglik(self, design: np.ndarray, B: np.ndarray, y_idx: np.ndarray) -> float:
        probs = self._probs(design, B)
        return float(np.sum(np.log(np.clip(probs[np.arange(len(y_idx)), y_idx], 1e-300, None))))

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        self.classes_ = np.unique(y)
        K = len(self.classes_)
        if K < 2:
            raise DataError("multinomial regression needs at least two classes", module="modeling")
        for cls in self.classes_:
            if (y == cls).sum() < 10:
                raise DataError(f"class {cls!r} has fewer than 10 rows", module="modeling")
        y_idx = np.searchsorted(self.classes_, y)

        names = [f"x{j}" for j in range(X.shape[1])]
        Xr, kept, dropped = _drop_constant(X, names)
        self._kept_idx = [names.index(n) for n in kept]
        self.dropped_constant_ = dropped
        design = np.column_stack([np.ones(len(Xr)), Xr])
        if np.linalg.matrix_rank(design) < design.shape[1]:
            raise NumericError("design matrix is rank deficient", module="modeling")
        p = design.shape[1]
        m = K - 1

        B = np.zeros((m, p))
        loglik = self._loglik(design, B, y_idx)
        self.loglik_path_ = [loglik]
        converged = False
        for _ in range(self.max_iter):
            probs = self._probs(design, B)
            grad = np.empty(m * p)
            for k in range(m):
                resid = (y_idx == k + 1).astype(float) - probs[:, k + 1]
                grad[k * p : (k + 1) * p] = design.T @ resid
            hess = np.empty((m * p, m * p))
            for k in range(m):
                for l in range(m):
                    w = probs[:, k + 1] * ((1.0 if k == l else 0.0) - probs[:, l + 1])
                    hess[k * p : (k + 1) * p, l * p : (l + 1) * p] = design.T @ (design * w[:, None])
            try:
                step = np.linalg.solve(hess, grad).reshape(m, p)
            except np.linalg.LinAlgError as exc:
                raise NumericError(f"Newton system is singular: {exc}", module="modeling") from exc
            scale = 1.0
            for _ in range(40):
                cand = B + scale * step
                if self._loglik(design, cand, y_idx) >= loglik - 1e-12:
                    break
                scale *= 0.5
            B = B + scale * step
            loglik = self._loglik(design, B, y_idx)
            self.loglik_path_.append(loglik)
            if float(np.max(np.abs(scale * step))) < self.tol:
                converged = True
                break

        probs = self._probs(design, B)
        hess = np.empty((m * p, m * p))
        for k in range(m):
            for l in range(m):
                w = probs[:, k + 1] * ((1.0 if k == l else 0.0) - probs[:, l + 1])
                hess[k * p : (k + 1) * p, l * p : (l + 1) * p] = design.T @ (design * w[:, None])
        cov = np.linalg.inv(hess)
        se = np.sqrt(np.diag(cov)).reshape(m, p)
        self.coef_matrix_ = B
        self.se_matrix_ = se
        self.z_matrix_ = B / se
        self.p_matrix_ = _normal_sf(np.abs(self.z_matrix_)) * 2
        self.loglik_ = loglik
        self.aic_ = 2 * m * p - 2 * loglik
        self.n_iter_ = len(self.loglik_path_) - 1
        self.converged_ = converged
        self.separation_ = bool(np.any(np.abs(B) > self.separation_bound))
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        X = np.asarray(X, dtype=float)[:, self._kept_idx]
        design = np.column_stack([np.ones(len(X)), X])
        return self._probs(design, self.coef_matrix_)

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def _tied_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values), dtype=float)
    i = 0
    sorted_vals = values[order]
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def auc_score(y: np.ndarray, scores: np.ndarray) -> float:
    """Rank-based AUC: probability a random positive outscores a random
    negative, counting ties as one half."""
    y = np.asarray(y).astype(int)
    scores = np.asarray(scores, dtype=float)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC undefined: labels contain a single class", module="modeling")
    ranks = _tied_ranks(scores)
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def evaluate_scores(y: np.ndarray, scores: np.ndarray, threshold: float = 0.5) -> dict[str, float]:
    y = np.asarray(y).astype(int)
    scores = np.asarray(scores, dtype=float)
    pred = (scores >= threshold).astype(int)
    tp = int(((pred == 1) & (y == 1)).sum())
    tn = int(((pred == 0) & (y == 0)).sum())
    fp = int(((pred == 1) & (y == 0)).sum())
    fn = int(((pred == 0) & (y == 1)).sum())
    return {
        "AUC": auc_score(y, scores),
        "TPR": tp / (tp + fn) if tp + fn else float("nan"),
        "TNR": tn / (tn + fp) if tn + fp else float("nan"),
        "ACC": (tp + tn) / len(y),
    }


def evaluate(model, X, y, threshold: float = 0.5) -> dict[str, float]:
    """AUC/TPR/TNR/ACC of a fitted binary model on (X, y)."""
    scores = model.predict_proba(X)[:, 1]
    return evaluate_scores(y, scores, threshold)


# ---------------------------------------------------------------------------
# Variable selection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SelectionProtocol:
    alpha: float = 0.05
    corr_threshold: float = 0.4
    vif_threshold: float = 5.0


def _vif(X: np.ndarray) -> np.ndarray:
    n, p = X.shape
    if p < 2:
        return np.ones(p)
    out = np.empty(p)
    for j in range(p):
        others = np.column_stack([np.ones(n), np.delete(X, j, axis=1)])
        target = X[:, j]
        coef, *_ = np.linalg.lstsq(others, target, rcond=None)
        resid = target - others @ coef
        sst = float(((target - target.mean()) ** 2).sum())
        r2 = 0.0 if sst == 0 else 1.0 - float((resid**2).sum()) / sst
        out[j] = np.inf if r2 >= 1.0 else 1.0 / (1.0 - r2)
    return out


def select_variables(
    X: np.ndarray,
    y: np.ndarray,
    feature_names: Sequence[str],
    protocol: SelectionProtocol = SelectionProtocol(),
) -> tuple[list[str], list[dict[str, Any]]]:
    """Four-stage variable selection for the binary model.

    Stage 1 drops variables whose univariate Wald p-value is not below
    ``alpha``; stage 2 resolves pairs correlated beyond ``corr_threshold``
    (processed in descending absolute correlation) by keeping the lower
    univariate AIC; stage 3 is backward elimination by AIC; stage 4 drops the
    highest-VIF variable until all VIFs are at most ``vif_threshold``.
    """
    X = np.asarray(X, dtype=float)
    names = list(feature_names)
    if X.shape[1] != len(names):
        raise DataError("feature_names length does not match X columns", module="modeling")
    trace: list[dict[str, Any]] = []

    uni_p: dict[str, float] = {}
    uni_aic: dict[str, float] = {}
    for j, name in enumerate(names):
        col = X[:, j : j + 1]
        if np.ptp(col) == 0:
            uni_p[name], uni_aic[name] = 1.0, np.inf
            continue
        m = BinaryLogisticRegression().fit(col, y)
        uni_p[name] = float(m.p_[0])
        uni_aic[name] = float(m.aic_)

    alive = []
    for name in names:
        if uni_p[name] >= protocol.alpha:
            trace.append(
                {"variable": name, "reason": "insignificant", "stage": 1, "detail": f"univariate p={uni_p[name]:.4g}"}
            )
        else:
            alive.append(name)

    if len(alive) >= 2:
        sub = X[:, [names.index(n) for n in alive]]
        corr = np.corrcoef(sub, rowvar=False)
        pairs = []
        for i in range(len(alive)):
            for j in range(i + 1, len(alive)):
                r = corr[i, j]
                if abs(r) > protocol.corr_threshold:
                    pairs.append((-abs(r), alive[i], alive[j], r))
        pairs.sort()
        for _, a, b, r in pairs:
            if a not in alive or b not in alive:
                continue
            drop = b if uni_aic[b] >= uni_aic[a] else a
            keep = a if drop == b else b
            alive.remove(drop)
            trace.append(
                {
                    "variable": drop,
                    "reason": "correlated",
                    "stage": 2,
                    "detail": f"|r|={abs(r):.3f} with {keep}; univariate AIC {uni_aic[drop]:.2f} >= {uni_aic[keep]:.2f}",
                }
            )

    def model_aic(subset: list[str]) -> float:
        if not subset:
            m = BinaryLogisticRegression().fit(np.zeros((len(y), 1)), y)
            return float(m.aic_)
        m = BinaryLogisticRegression().fit(X[:, [names.index(n) for n in subset]], y)
        return float(m.aic_)

    while alive:
        current = model_aic(alive)
        candidates = [(model_aic([n for n in alive if n != name]), name) for name in alive]
        best_aic, best_name = min(candidates, key=lambda c: (c[0], alive.index(c[1])))
        if best_aic < current - 1e-10:
            alive.remove(best_name)
            trace.append(
                {
                    "variable": best_name,
                    "reason": "backward_aic",
                    "stage": 3,
                    "detail": f"AIC {current:.3f} -> {best_aic:.3f}",
                }
            )
        else:
            break

    while len(alive) >= 2:
        sub = X[:, [names.index(n) for n in alive]]
        vifs = _vif(sub)
        worst = float(np.max(vifs))
        if worst <= protocol.vif_threshold:
            break
        at_max = [alive[i] for i in range(len(alive)) if vifs[i] == worst]
        drop = max(at_max, key=lambda n: (uni_aic[n], alive.index(n)))
        alive.remove(drop)
        trace.append({"variable": drop, "reason": "vif", "stage": 4, "detail": f"VIF={worst:.2f}"})

    if not alive:
        err = NumericError("variable selection removed every predictor", module="modeling")
        err.trace = trace
        raise err
    return alive, trace


# ---------------------------------------------------------------------------
# Fit summaries and reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoefStat:
    estimate: float
    se: float
    z: float
    p: float


@dataclass
class ModelFit:
    """Full record of one fitted regression, ready for reporting."""

    kind: str
    feature_names: list[str]
    coefficients: dict[str, dict[str, CoefStat]]
    intercepts: dict[str, CoefStat]
    aic: float
    metrics: dict[str, dict[str, float]]
    selection_trace: list[dict[str, Any]] = field(default_factory=list)
    seed: int | None = None
    warnings: list[str] = field(default_factory=list)
    converged: bool = True
    config: dict[str, Any] = field(default_factory=dict)
    model: Any = field(default=None, repr=False, compare=False)


def _binary_fit_summary(model: BinaryLogisticRegression, names: list[str], class_label: str = "high_risk"):
    kept = [names[j] for j in model._kept_idx]
    stats = {
        name: CoefStat(float(model.coef_[i]), float(model.se_[i]), float(model.z_[i]), float(model.p_[i]))
        for i, name in enumerate(kept)
    }
    intercept = CoefStat(model.intercept_, model.se_intercept_, model.z_intercept_, model.p_intercept_)
    return {class_label: stats}, {class_label: intercept}


def fit_binary_logistic(X, y, feature_names: Sequence[str] | None = None, **model_kwargs) -> ModelFit:
    """Fit a binary logistic regression (no selection) and summarize it."""
    X = np.asarray(X, dtype=float)
    names = list(feature_names) if feature_names is not None else [f"x{j+1}" for j in range(X.shape[1])]
    model = BinaryLogisticRegression(**model_kwargs).fit(X, y)
    coeffs, intercepts = _binary_fit_summary(model, names)
    warnings = []
    if model.separation_:
        warnings.append("possible perfect separation: a coefficient exceeds the separation bound")
    if model.dropped_constant_:
        dropped = [names[int(n[1:])] for n in model.dropped_constant_]
        warnings.append(f"constant column(s) removed: {', '.join(dropped)}")
    return ModelFit(
        kind="binary_logistic",
        feature_names=[names[j] for j in model._kept_idx],
        coefficients=coeffs,
        intercepts=intercepts,
        aic=float(model.aic_),
        metrics={},
        warnings=warnings,
        converged=model.converged_,
        model=model,
    )


def fit_multinomial(X, y, feature_names: Sequence[str] | None = None, class_names: dict | None = None, **model_kwargs) -> ModelFit:
    """Fit a multinomial logit with the smallest class label as reference."""
    X = np.asarray(X, dtype=float)
    names = list(feature_names) if feature_names is not None else [f"x{j+1}" for j in range(X.shape[1])]
    model = MultinomialLogisticRegression(**model_kwargs).fit(X, y)
    kept = [names[j] for j in model._kept_idx]
    coefficients: dict[str, dict[str, CoefStat]] = {}
    intercepts: dict[str, CoefStat] = {}
    for k, cls in enumerate(model.classes_[1:]):
        label = str(class_names.get(cls, cls)) if class_names else str(cls)
        coefficients[label] = {
            name: CoefStat(
                float(model.coef_matrix_[k, i + 1]),
                float(model.se_matrix_[k, i + 1]),
                float(model.z_matrix_[k, i + 1]),
                float(model.p_matrix_[k, i + 1]),
            )
            for i, name in enumerate(kept)
        }
        intercepts[label] = CoefStat(
            float(model.coef_matrix_[k, 0]),
            float(model.se_matrix_[k, 0]),
            float(model.z_matrix_[k, 0]),
            float(model.p_matrix_[k, 0]),
        )
    warnings = []
    if model.separation_:
        warnings.append("possible perfect separation: a coefficient exceeds the separation bound")
    return ModelFit(
        kind="multinomial_logistic",
        feature_names=kept,
        coefficients=coefficients,
        intercepts=intercepts,
        aic=float(model.aic_),
        metrics={},
        warnings=warnings,
        converged=model.converged_,
        model=model,
    )


def _fmt_p(p: float) -> str:
    return "<0.001" if p < 0.001 else f"{p:.3f}"


def fit_report_text(fit: ModelFit, title: str) -> str:
    lines = [title, "=" * len(title), ""]
    for class_label, stats in fit.coefficients.items():
        if fit.kind == "multinomial_logistic":
            lines.append(f"[{class_label}]")
        ordered = sorted(stats.items(), key=lambda kv: -abs(kv[1].estimate))
        lines.append(f"{'Variables':<22}{'Coef.':>10}{'Std.Error':>12}{'Z value':>10}{'P value':>10}")
        for name, st in ordered:
            lines.append(f"{name:<22}{st.estimate:>10.3f}{st.se:>12.3f}{st.z:>10.3f}{_fmt_p(st.p):>10}")
        ist = fit.intercepts[class_label]
        lines.append(f"{'(intercept)':<22}{ist.estimate:>10.3f}{ist.se:>12.3f}{ist.z:>10.3f}{_fmt_p(ist.p):>10}")
        lines.append("")
    if fit.metrics:
        metric_names = [m for m in ("AUC", "TPR", "TNR", "ACC") if any(m in v for v in fit.metrics.values())]
        lines.append("".join([f"{'':<12}"] + [f"{m:>8}" for m in metric_names]))
        for split in ("training", "validation"):
            if split in fit.metrics:
                vals = fit.metrics[split]
                cells = "".join(f"{vals[m]:>8.3f}" if m in vals else f"{'-':>8}" for m in metric_names)
                lines.append(f"{split.capitalize():<12}{cells}")
        lines.append("")
    lines.append(f"AIC: {fit.aic:.3f}")
    if fit.kind == "multinomial_logistic":
        lines.append("Reference pattern: dissipation (label 0)")
    if fit.selection_trace:
        lines.append("")
        lines.append("Selection trace:")
        for entry in fit.selection_trace:
            lines.append(f"  - {entry['variable']}: {entry['reason']} ({entry['detail']})")
    for w in fit.warnings:
        lines.append(f"warning: {w}")
    return "\n".join(lines) + "\n"


def fit_report_json(fit: ModelFit, title: str) -> str:
    payload = {
        "title": title,
        "kind": fit.kind,
        "variables": fit.feature_names,
        "coefficients": {
            cls: {name: vars(st) for name, st in stats.items()} for cls, stats in fit.coefficients.items()
        },
        "intercepts": {cls: vars(st) for cls, st in fit.intercepts.items()},
        "aic": fit.aic,
        "metrics": fit.metrics,
        "selection_trace": fit.selection_trace,
        "seed": fit.seed,
        "warnings": fit.warnings,
        "converged": fit.converged,
        "config": fit.config,
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"
