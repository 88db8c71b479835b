"""Core data types shared by every layer.

All values are immutable after construction and safe to share across
threads. Validation is data, not control flow: ``validate`` returns the
list of violated invariants instead of raising.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

ASSIGN_TOL = 1e-6


class ActionType(str, Enum):
    """The three recommendable sales actions."""

    BOOST_ENGAGEMENT = "BoostEngagement"
    PREVENT_CHURN = "PreventChurn"
    PROMOTE_UPSELL = "PromoteUpsell"


class FeedbackKind(str, Enum):
    """Rep feedback on a served recommendation."""

    DEEP_LINK_CLICKED = "DeepLinkClicked"
    NOTIFICATION_DISMISSED = "NotificationDismissed"
    NO_CLICK = "NoClick"


REWARD_BY_FEEDBACK: dict[FeedbackKind, int] = {
    FeedbackKind.DEEP_LINK_CLICKED: 1,
    FeedbackKind.NOTIFICATION_DISMISSED: -1,
    FeedbackKind.NO_CLICK: 0,
}


class Group(str, Enum):
    TREAT = "Treat"
    CTRL = "Ctrl"


class Period(str, Enum):
    PRE = "Pre"
    POST = "Post"


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.asarray(arr, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Account:
    """A unit of recommendation.

    ``x`` is the full standardized feature vector; ``u_idx`` and ``e_idx``
    are index subsets selecting the pre-treatment and engagement
    sub-vectors, so the projections can never drift from ``x``.
    ``engagement_now`` holds the current values of the engagement metrics
    (product utilization 0-100, product adoption 0-1) that forecast deltas
    are computed against. ``true_ite`` is populated only by the synthetic
    generator.
    """

    id: str
    x: np.ndarray
    u_idx: tuple[int, ...]
    e_idx: tuple[int, ...]
    d: int
    engagement_now: tuple[float, ...] = ()
    true_ite: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", _freeze(self.x))
        object.__setattr__(self, "u_idx", tuple(int(i) for i in self.u_idx))
        object.__setattr__(self, "e_idx", tuple(int(i) for i in self.e_idx))
        object.__setattr__(self, "engagement_now", tuple(float(v) for v in self.engagement_now))

    @property
    def x_u(self) -> np.ndarray:
        return self.x[list(self.u_idx)]

    @property
    def x_e(self) -> np.ndarray:
        return self.x[list(self.e_idx)]


@dataclass(frozen=True)
class Rep:
    """A sales representative with a fixed-length feature vector."""

    id: str
    s: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "s", _freeze(self.s))


@dataclass(frozen=True)
class ScoredAccount:
    """An account with its predicted scores.

    ``y_u_raw`` is the monetization uplift in currency units, ``delta_e``
    the per-metric engagement changes, ``y_e_raw`` their max absolute
    value. ``y_u``/``y_e`` are the pool-normalized [0, 100] scores and are
    None until normalization has run. ``d`` (days until RTCD) rides along
    because both the objective weight and the action rule need it.
    """

    account_id: str
    d: int
    y_u_raw: float
    delta_e: np.ndarray
    y_e_raw: float
    y_u: float | None = None
    y_e: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "delta_e", _freeze(self.delta_e))


@dataclass(frozen=True)
class AssignmentMatrix:
    """Fractional LP solution over accounts x reps."""

    entries: np.ndarray
    account_index: tuple[str, ...]
    rep_index: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", _freeze(self.entries))
        object.__setattr__(self, "account_index", tuple(self.account_index))
        object.__setattr__(self, "rep_index", tuple(self.rep_index))


@dataclass(frozen=True)
class Recommendation:
    """A matched (account, rep, action) served to the console."""

    account_id: str
    rep_id: str
    action: ActionType
    g_rank: int
    r_rank: int
    a_value: float
    explanation: str
    created_at: int


@dataclass(frozen=True)
class FeedbackEvent:
    """Rep feedback on a served recommendation at day index ``t``."""

    rep_id: str
    account_id: str
    action: ActionType
    feedback: FeedbackKind
    reward: int
    t: int

    @classmethod
    def from_feedback(
        cls, rep_id: str, account_id: str, action: ActionType, feedback: FeedbackKind, t: int
    ) -> "FeedbackEvent":
        return cls(rep_id, account_id, action, feedback, REWARD_BY_FEEDBACK[feedback], t)


@dataclass(frozen=True)
class BanditContext:
    """Concatenated context for the action bandit.

    ``x_a``: account features, ``x_s``: rep features, ``x_r``: alert-history
    features (time-since-last-alert, previous-alert-count, one-hot last
    feedback kind, one-hot alert category). Concatenation order is fixed.
    """

    x_a: np.ndarray
    x_s: np.ndarray
    x_r: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "x_a", _freeze(self.x_a))
        object.__setattr__(self, "x_s", _freeze(self.x_s))
        object.__setattr__(self, "x_r", _freeze(self.x_r))

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.x_a, self.x_s, self.x_r])


@dataclass(frozen=True)
class PanelObservation:
    """One outcome for a (unit, period) cell of the observational panel."""

    unit_id: str
    group: Group
    period: Period
    outcome: float
    covariates: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self) -> None:
        object.__setattr__(self, "covariates", _freeze(self.covariates))


@dataclass(frozen=True)
class PanelTimeObservation:
    """One outcome for a (unit, day-index) pair; feeds placebo pre-tests."""

    unit_id: str
    group: Group
    t: int
    outcome: float
    covariates: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self) -> None:
        object.__setattr__(self, "covariates", _freeze(self.covariates))


def _validate_account(a: Account) -> list[str]:
    out = []
    if a.d < 0:
        out.append("d: must be >= 0")
    n = a.x.shape[0]
    for name, idx in (("u_idx", a.u_idx), ("e_idx", a.e_idx)):
        if any(i < 0 or i >= n for i in idx):
            out.append(f"{name}: index out of range of x")
        if len(set(idx)) != len(idx):
            out.append(f"{name}: duplicate indices")
    if a.x.ndim != 1:
        out.append("x: must be a 1-d vector")
    return out


def _validate_rep(r: Rep) -> list[str]:
    return ["s: must be a 1-d vector"] if r.s.ndim != 1 else []


def _validate_scored(s: ScoredAccount) -> list[str]:
    out = []
    if s.delta_e.size == 0:
        out.append("delta_e: must have at least one engagement metric")
    elif abs(s.y_e_raw - float(np.max(np.abs(s.delta_e)))) > 1e-9:
        out.append("y_e_raw: must equal max(|delta_e|)")
    for name, v in (("y_u", s.y_u), ("y_e", s.y_e)):
        if v is not None and not (-1e-9 <= v <= 100 + 1e-9):
            out.append(f"{name}: must be in [0, 100]")
    return out


def _validate_assignment(m: AssignmentMatrix) -> list[str]:
    out = []
    if m.entries.shape != (len(m.account_index), len(m.rep_index)):
        out.append("entries: shape must match (accounts, reps)")
        return out
    if m.entries.size and (m.entries.min() < -ASSIGN_TOL or m.entries.max() > 1 + ASSIGN_TOL):
        out.append("entries: every entry must be in [0, 1]")
    if m.entries.size and m.entries.sum(axis=1).max() > 1 + ASSIGN_TOL:
        out.append("entries: row sum <= 1")
    return out


def _validate_recommendation(r: Recommendation) -> list[str]:
    out = []
    if r.g_rank < 1:
        out.append("g_rank: must be a positive integer")
    if r.r_rank < 1:
        out.append("r_rank: must be a positive integer")
    if r.a_value < 0.5:
        out.append("a_value: matched pairs require a_value >= 0.5")
    return out


def _validate_feedback(f: FeedbackEvent) -> list[str]:
    if f.reward != REWARD_BY_FEEDBACK[f.feedback]:
        return [f"reward: must be {REWARD_BY_FEEDBACK[f.feedback]} for {f.feedback.value}"]
    return []


def _validate_context(c: BanditContext) -> list[str]:
    out = []
    for name in ("x_a", "x_s", "x_r"):
        if getattr(c, name).ndim != 1:
            out.append(f"{name}: must be a 1-d vector")
    return out


def _validate_panel_obs(p: PanelObservation) -> list[str]:
    return ["outcome: must be finite"] if not np.isfinite(p.outcome) else []


_VALIDATORS = {
    Account: _validate_account,
    Rep: _validate_rep,
    ScoredAccount: _validate_scored,
    AssignmentMatrix: _validate_assignment,
    Recommendation: _validate_recommendation,
    FeedbackEvent: _validate_feedback,
    BanditContext: _validate_context,
    PanelObservation: _validate_panel_obs,
}


def validate(entity: object) -> list[str]:
    """Return every violated invariant with its field path; [] means ok."""
    checker = _VALIDATORS.get(type(entity))
    if checker is None:
        raise TypeError(f"no validator for {type(entity).__name__}")
    return checker(entity)


def validate_recommendation_set(recs: Sequence[Recommendation]) -> list[str]:
    """Collection-level invariants: rank contiguity per rep and globally."""
    out = []
    for r in recs:
        out.extend(f"{r.account_id}/{r.rep_id}: {v}" for v in validate(r))
    g_ranks = sorted(r.g_rank for r in recs)
    if g_ranks != list(range(1, len(recs) + 1)):
        out.append("g_rank: must be 1..N contiguous over all matched pairs")
    by_rep: dict[str, list[int]] = {}
    for r in recs:
        by_rep.setdefault(r.rep_id, []).append(r.r_rank)
    for rep_id, ranks in by_rep.items():
        if sorted(ranks) != list(range(1, len(ranks) + 1)):
            out.append(f"r_rank: must be 1..n contiguous within rep {rep_id}")
    return out
