"""Pydantic request/response models mirroring the domain types field-for-field."""

from __future__ import annotations

from pydantic import BaseModel, Field

from ..domain import ActionType, FeedbackKind


class RecommendationModel(BaseModel):
    account_id: str
    rep_id: str
    action: ActionType
    g_rank: int
    r_rank: int
    a_value: float
    explanation: str
    created_at: int


class RecommendationList(BaseModel):
    rep_id: str
    day: int | None
    recommendations: list[RecommendationModel]


class FeedbackRequest(BaseModel):
    rep_id: str
    account_id: str
    feedback: FeedbackKind


class FeedbackAck(BaseModel):
    accepted: bool
    rep_id: str
    account_id: str
    action: ActionType
    feedback: FeedbackKind
    reward: int
    day: int


class RunRequest(BaseModel):
    pass  # advancing the day needs no parameters; config lives in the engine


class RunResponse(BaseModel):
    run_id: str
    day: int
    n_recommendations: int


class DayMetrics(BaseModel):
    day: int
    served: int
    reward: int
    actions: dict[str, int]
    feedback: dict[str, int]


class MetricsResponse(BaseModel):
    cumulative_reward: int
    feedback_counts: dict[str, int]
    selection_shares: dict[str, float] = Field(
        description="fraction of served recommendations per action"
    )
    days: list[DayMetrics]
