"""Engagement forecast models: product utilization (0-100) and product
adoption (0-1), with MAE/RMSE evaluation and next-period deltas."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .domain import Account
from .uplift import BaseSpec, Regressor, fit_base

TARGETS = ("pu", "pa")
CLAMP_RANGES: dict[str, tuple[float, float]] = {"pu": (0.0, 100.0), "pa": (0.0, 1.0)}


@dataclass(frozen=True)
class Forecaster:
    """A clamped regression for one engagement metric."""

    target: str
    base: Regressor
    clamp: tuple[float, float]

    def predict_raw(self, X: np.ndarray) -> np.ndarray:
        return self.base.predict(X)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.clip(self.base.predict(X), self.clamp[0], self.clamp[1])


def fit_forecaster(
    X_e: np.ndarray, y_target: np.ndarray, target: str, spec: BaseSpec | None = None
) -> Forecaster:
    if target not in CLAMP_RANGES:
        raise ValueError(f"unknown forecast target {target!r}; expected one of {TARGETS}")
    lo, hi = CLAMP_RANGES[target]
    y_target = np.asarray(y_target, dtype=float)
    if y_target.size and (y_target.min() < lo or y_target.max() > hi):
        raise ValueError(f"{target} training targets must lie in [{lo}, {hi}]")
    return Forecaster(target=target, base=fit_base(X_e, y_target, spec), clamp=(lo, hi))


def evaluate(forecaster: Forecaster, X_holdout: np.ndarray, y_holdout: np.ndarray) -> tuple[float, float]:
    """(MAE, RMSE) of clamped predictions on a holdout set."""
    y_holdout = np.asarray(y_holdout, dtype=float)
    if y_holdout.size == 0:
        raise ValueError("holdout set must be non-empty")
    err = forecaster.predict(X_holdout) - y_holdout
    return float(np.mean(np.abs(err))), float(np.sqrt(np.mean(err**2)))


@dataclass(frozen=True)
class ForecastBundle:
    """One forecaster per engagement metric, in TARGETS order."""

    forecasters: tuple[Forecaster, ...]

    def deltas(self, account: Account, horizon: int = 1) -> np.ndarray:
        return np.array(
            [forecast_delta(f, account, index=i, horizon=horizon) for i, f in enumerate(self.forecasters)]
        )


def forecast_delta(forecaster: Forecaster, account: Account, index: int | None = None, horizon: int = 1) -> float:
    """Predicted next-period value minus the account's current value."""
    if horizon != 1:
        raise ValueError("forecast horizon is fixed at one period")
    if index is None:
        index = TARGETS.index(forecaster.target)
    if index >= len(account.engagement_now):
        raise ValueError(f"account {account.id} carries no current value for metric {index}")
    current = account.engagement_now[index]
    predicted = float(forecaster.predict(account.x_e.reshape(1, -1))[0])
    return predicted - current


def fit_engagement_models(
    accounts: Sequence[Account], targets: np.ndarray, spec: BaseSpec | None = None
) -> ForecastBundle:
    """Fit the pu and pa forecasters from per-account next-period targets."""
    X_e = np.array([a.x_e for a in accounts])
    return ForecastBundle(
        forecasters=tuple(
            fit_forecaster(X_e, targets[:, i], name, spec) for i, name in enumerate(TARGETS)
        )
    )
