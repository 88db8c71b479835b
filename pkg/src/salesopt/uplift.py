"""Monetization uplift estimation: S/T/X/DR meta-learners over pluggable
base regressors, plus decile evaluation.

Base fits are deterministic closed forms (ridge normal equations, greedy
stage-wise stumps) so the synthetic-oracle tests can pin exact values.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass


import numpy as np

logger = logging.getLogger(__name__)

PROPENSITY_CLIP = (0.01, 0.99)


class InsufficientDataError(ValueError):
    """An arm has too few rows to fit its base model without bias."""


@dataclass(frozen=True)
class BaseSpec:
    """Base regressor selection and hyperparameters."""

    kind: str = "ridge"  # "ridge" | "stumps"
    ridge_lambda: float = 0.0
    rounds: int = 200
    learning_rate: float = 0.1
    n_thresholds: int = 16

    def __post_init__(self) -> None:
        if self.kind not in ("ridge", "stumps"):
            raise ValueError(f"unknown base kind {self.kind!r}")
        if self.ridge_lambda < 0:
            raise ValueError("ridge_lambda must be >= 0")


@dataclass(frozen=True)
class RidgeRegressor:
    """Least squares with an unpenalized intercept; exact normal-equation fit."""

    intercept: float
    coefs: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.intercept + np.atleast_2d(X) @ self.coefs


@dataclass(frozen=True)
class Stump:
    feature: int
    threshold: float
    left: float
    right: float


@dataclass(frozen=True)
class StumpEnsemble:
    """Greedy stage-wise depth-1 boosting on squared error."""

    init: float
    learning_rate: float
    stumps: tuple[Stump, ...]

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        out = np.full(X.shape[0], self.init)
        for s in self.stumps:
            out = out + self.learning_rate * np.where(X[:, s.feature] <= s.threshold, s.left, s.right)
        return out


Regressor = RidgeRegressor | StumpEnsemble


def _fit_ridge(X: np.ndarray, y: np.ndarray, lam: float) -> RidgeRegressor:
    n, p = X.shape
    design = np.column_stack([np.ones(n), X])
    if lam > 0:
        gram = design.T @ design
        gram[1:, 1:] += lam * np.eye(p)
        beta = np.linalg.solve(gram, design.T @ y)
    else:
        beta, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    return RidgeRegressor(intercept=float(beta[0]), coefs=beta[1:])


def _fit_stumps(X: np.ndarray, y: np.ndarray, spec: BaseSpec) -> StumpEnsemble:
    n, p = X.shape
    qs = np.linspace(0, 1, spec.n_thresholds + 2)[1:-1]
    thresholds = [np.unique(np.quantile(X[:, j], qs)) for j in range(p)]
    # bin index per row per feature: bin b means x <= thresholds[b] fails for all b' < b
    bins = [np.searchsorted(thresholds[j], X[:, j], side="left") for j in range(p)]
    init = float(y.mean())
    resid = y - init
    stumps: list[Stump] = []
    for _ in range(spec.rounds):
        best = None  # (sse_reduction, j, t_idx, left_mean, right_mean)
        for j in range(p):
            tj = thresholds[j]
            if tj.size == 0:
                continue
            nbins = tj.size + 1
            cnt = np.bincount(bins[j], minlength=nbins).astype(float)
            tot = np.bincount(bins[j], weights=resid, minlength=nbins)
            left_n = np.cumsum(cnt)[:-1]
            left_s = np.cumsum(tot)[:-1]
            right_n = n - left_n
            right_s = resid.sum() - left_s
            ok = (left_n > 0) & (right_n > 0)
            if not ok.any():
                continue
            gain = np.where(ok, left_s**2 / np.maximum(left_n, 1) + right_s**2 / np.maximum(right_n, 1), -np.inf)
            t_idx = int(np.argmax(gain))
            if best is None or gain[t_idx] > best[0] + 1e-15:
                best = (
                    float(gain[t_idx]),
                    j,
                    t_idx,
                    float(left_s[t_idx] / left_n[t_idx]),
                    float(right_s[t_idx] / right_n[t_idx]),
                )
        if best is None or best[0] <= 1e-12:
            break
        _, j, t_idx, ml, mr = best
        stump = Stump(j, float(thresholds[j][t_idx]), ml, mr)
        stumps.append(stump)
        resid = resid - spec.learning_rate * np.where(X[:, j] <= stump.threshold, ml, mr)
    return StumpEnsemble(init=init, learning_rate=spec.learning_rate, stumps=tuple(stumps))


def fit_base(X: np.ndarray, y: np.ndarray, spec: BaseSpec | None = None) -> Regressor:
    """Fit the configured base regressor; degenerate designs never crash."""
    spec = spec or BaseSpec()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y must have the same number of rows")
    if spec.kind == "ridge":
        return _fit_ridge(X, y, spec.ridge_lambda)
    return _fit_stumps(X, y, spec)


@dataclass(frozen=True)
class LogisticModel:
    """Ridge-penalized logistic regression fit by IRLS, outputs clipped."""

    intercept: float
    coefs: np.ndarray
    clip: tuple[float, float] = PROPENSITY_CLIP

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        z = self.intercept + np.atleast_2d(X) @ self.coefs
        p = 1.0 / (1.0 + np.exp(-np.clip(z, -700, 700)))
        return np.clip(p, self.clip[0], self.clip[1])


def propensity_fit(X: np.ndarray, a: np.ndarray, ridge: float = 1e-3, max_iter: int = 50) -> LogisticModel:
    """P(a=1 | x) via iteratively reweighted least squares."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    a = np.asarray(a, dtype=float)
    classes = np.unique(a)
    if not np.array_equal(classes, [0.0, 1.0]):
        raise ValueError("propensity fit requires both treatment classes present")
    n, p = X.shape
    design = np.column_stack([np.ones(n), X])
    pen = ridge * np.eye(p + 1)
    pen[0, 0] = 0.0
    beta = np.zeros(p + 1)
    for _ in range(max_iter):
        z = np.clip(design @ beta, -30, 30)
        mu = 1.0 / (1.0 + np.exp(-z))
        w = np.maximum(mu * (1.0 - mu), 1e-10)
        grad = design.T @ (a - mu) - pen @ beta
        hess = (design * w[:, None]).T @ design + pen
        step = np.linalg.solve(hess, grad)
        beta = beta + step
        if np.max(np.abs(step)) < 1e-10:
            break
    return LogisticModel(intercept=float(beta[0]), coefs=beta[1:])


def _check_arms(X: np.ndarray, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    treated = a == 1
    control = a == 0
    p = X.shape[1]
    for name, mask in (("treatment", treated), ("control", control)):
        rows = int(mask.sum())
        if rows == 0:
            raise InsufficientDataError(f"{name} arm is empty")
        if rows < p + 1:
            raise InsufficientDataError(
                f"{name} arm has {rows} rows but needs at least {p + 1} for {p} features"
            )
    return treated, control


@dataclass(frozen=True)
class TLearner:
    """Two arm-specific regressions; effect = difference of predictions."""

    f0: Regressor
    f1: Regressor

    learner_kind = "T"

    def predict_ite(self, X: np.ndarray) -> np.ndarray:
        return self.f1.predict(X) - self.f0.predict(X)


@dataclass(frozen=True)
class SLearner:
    """One regression on [x, a]; the treatment indicator gets no special role."""

    model: Regressor
    n_features: int

    learner_kind = "S"

    def predict_ite(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        ones = np.ones((X.shape[0], 1))
        return self.model.predict(np.hstack([X, ones])) - self.model.predict(
            np.hstack([X, 0 * ones])
        )


@dataclass(frozen=True)
class XLearner:
    """Imputed per-arm effect regressions blended by the propensity g(x)."""

    f0: Regressor
    f1: Regressor
    tau0: Regressor
    tau1: Regressor
    g: LogisticModel | float

    learner_kind = "X"

    def predict_ite(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        if isinstance(self.g, LogisticModel):
            gx = self.g.predict_proba(X)
        else:
            gx = np.full(X.shape[0], float(self.g))
        return gx * self.tau0.predict(X) + (1.0 - gx) * self.tau1.predict(X)


@dataclass(frozen=True)
class DRLearner:
    """Doubly-robust pseudo-outcome regression."""

    f0: Regressor
    f1: Regressor
    propensity: LogisticModel
    final: Regressor

    learner_kind = "DR"

    def predict_ite(self, X: np.ndarray) -> np.ndarray:
        return self.final.predict(X)


UpliftModel = TLearner | SLearner | XLearner | DRLearner


def fit_t_learner(X: np.ndarray, y: np.ndarray, a: np.ndarray, spec: BaseSpec | None = None) -> TLearner:
    X, y, a = _as_arrays(X, y, a)
    treated, control = _check_arms(X, a)
    return TLearner(
        f0=fit_base(X[control], y[control], spec),
        f1=fit_base(X[treated], y[treated], spec),
    )


def fit_s_learner(X: np.ndarray, y: np.ndarray, a: np.ndarray, spec: BaseSpec | None = None) -> SLearner:
    X, y, a = _as_arrays(X, y, a)
    if np.unique(a).size < 2:
        raise InsufficientDataError("treatment indicator is constant; nothing to contrast")
    design = np.column_stack([X, a])
    return SLearner(model=fit_base(design, y, spec), n_features=X.shape[1])


def fit_x_learner(
    X: np.ndarray,
    y: np.ndarray,
    a: np.ndarray,
    spec: BaseSpec | None = None,
    g: float | None = None,
) -> XLearner:
    """``g=None`` uses the fitted propensity; pass 0.5 for the fixed blend."""
    X, y, a = _as_arrays(X, y, a)
    treated, control = _check_arms(X, a)
    f0 = fit_base(X[control], y[control], spec)
    f1 = fit_base(X[treated], y[treated], spec)
    d1 = y[treated] - f0.predict(X[treated])
    d0 = f1.predict(X[control]) - y[control]
    tau1 = fit_base(X[treated], d1, spec)
    tau0 = fit_base(X[control], d0, spec)
    blend: LogisticModel | float = propensity_fit(X, a) if g is None else float(g)
    return XLearner(f0=f0, f1=f1, tau0=tau0, tau1=tau1, g=blend)


def dr_pseudo_outcomes(
    X: np.ndarray, y: np.ndarray, a: np.ndarray, f0: Regressor, f1: Regressor, e: np.ndarray
) -> np.ndarray:
    """phi = f1 - f0 + a (y - f1)/e - (1 - a)(y - f0)/(1 - e)."""
    p0 = f0.predict(X)
    p1 = f1.predict(X)
    return p1 - p0 + a * (y - p1) / e - (1 - a) * (y - p0) / (1 - e)


def fit_dr_learner(X: np.ndarray, y: np.ndarray, a: np.ndarray, spec: BaseSpec | None = None) -> DRLearner:
    X, y, a = _as_arrays(X, y, a)
    treated, control = _check_arms(X, a)
    f0 = fit_base(X[control], y[control], spec)
    f1 = fit_base(X[treated], y[treated], spec)
    prop = propensity_fit(X, a)
    e = prop.predict_proba(X)
    clipped = int(np.sum((e <= PROPENSITY_CLIP[0]) | (e >= PROPENSITY_CLIP[1])))
    if clipped:
        logger.info("propensity clipped to %s on %d rows", PROPENSITY_CLIP, clipped)
    phi = dr_pseudo_outcomes(X, y, a, f0, f1, e)
    return DRLearner(f0=f0, f1=f1, propensity=prop, final=fit_base(X, phi, spec))


def _as_arrays(X, y, a) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    a = np.asarray(a, dtype=float)
    if not (X.shape[0] == y.shape[0] == a.shape[0]):
        raise ValueError("X, y, a must have the same number of rows")
    if not np.all(np.isin(a, (0.0, 1.0))):
        raise ValueError("treatment indicator must be binary 0/1")
    return X, y, a


@dataclass(frozen=True)
class DecileRow:
    decile: int  # 1 = lowest predicted uplift, 10 = highest
    n: int
    n_treated: int
    n_control: int
    mean_predicted: float
    uplift: float | None  # None when an arm is empty in the bin


def uplift_deciles(scores: np.ndarray, y: np.ndarray, a: np.ndarray, n_bins: int = 10) -> list[DecileRow]:
    """Rank by predicted uplift into bins; empirical uplift per bin.

    Ties and duplicate scores are broken by stable input order, so callers
    wanting id-stable output should pass rows sorted by account id.
    """
    scores = np.asarray(scores, dtype=float)
    y = np.asarray(y, dtype=float)
    a = np.asarray(a, dtype=float)
    if not (scores.shape[0] == y.shape[0] == a.shape[0]):
        raise ValueError("scores, y, a must align")
    if not ((a == 1).any() and (a == 0).any()):
        raise ValueError("both arms must be present in the population")
    order = np.argsort(scores, kind="stable")
    chunks = np.array_split(order, n_bins)
    rows: list[DecileRow] = []
    for k, idx in enumerate(chunks, start=1):
        ab = a[idx]
        yb = y[idx]
        nt = int((ab == 1).sum())
        nc = int((ab == 0).sum())
        uplift = None
        if nt > 0 and nc > 0:
            uplift = float(yb[ab == 1].mean() - yb[ab == 0].mean())
        rows.append(
            DecileRow(
                decile=k,
                n=len(idx),
                n_treated=nt,
                n_control=nc,
                mean_predicted=float(scores[idx].mean()) if len(idx) else math.nan,
                uplift=uplift,
            )
        )
    return rows


def decile_assignments(scores: np.ndarray, n_bins: int = 10) -> np.ndarray:
    """The bin index (1-based) each row lands in under the same ranking rule."""
    scores = np.asarray(scores, dtype=float)
    order = np.argsort(scores, kind="stable")
    out = np.empty(len(scores), dtype=np.int64)
    for k, idx in enumerate(np.array_split(order, n_bins), start=1):
        out[idx] = k
    return out


def ite_rmse(model: UpliftModel, X: np.ndarray, true_ite: np.ndarray) -> float:
    err = model.predict_ite(X) - np.asarray(true_ite, dtype=float)
    return float(np.sqrt(np.mean(err**2)))
