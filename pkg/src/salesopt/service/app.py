"""HTTP surface over one Engine.

Writes (runs, feedback) are serialized by a single lock; reads are pure
functions of the committed log. The logical day only advances through
POST /runs, never wall-clock.
"""

from __future__ import annotations

import threading

from fastapi import FastAPI, HTTPException

from ..engine import Engine
from ..simplex import LpError
from .schemas import (
    FeedbackAck,
    FeedbackRequest,
    MetricsResponse,
    RecommendationList,
    RecommendationModel,
    RunResponse,
)


def create_app(engine: Engine) -> FastAPI:
    app = FastAPI(title="salesopt", version="0.1.0")
    write_lock = threading.Lock()
    app.state.engine = engine

    @app.post("/runs", response_model=RunResponse)
    def trigger_run() -> RunResponse:
        with write_lock:
            try:
                manifest, recs = engine.run_day()
            except LpError as exc:
                raise HTTPException(status_code=409, detail=str(exc)) from exc
            return RunResponse(
                run_id=manifest.run_id, day=manifest.day, n_recommendations=len(recs)
            )

    @app.get("/runs/{run_id}", response_model=RunResponse)
    def get_run(run_id: str) -> RunResponse:
        try:
            manifest = engine.manifest_for(run_id)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return RunResponse(
            run_id=manifest.run_id, day=manifest.day, n_recommendations=manifest.n_recommendations
        )

    @app.get("/reps/{rep_id}/recommendations", response_model=RecommendationList)
    def rep_recommendations(rep_id: str) -> RecommendationList:
        try:
            recs = engine.serve_recommendations(rep_id)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return RecommendationList(
            rep_id=rep_id,
            day=engine.latest_committed_day(),
            recommendations=[
                RecommendationModel(
                    account_id=r.account_id,
                    rep_id=r.rep_id,
                    action=r.action,
                    g_rank=r.g_rank,
                    r_rank=r.r_rank,
                    a_value=r.a_value,
                    explanation=r.explanation,
                    created_at=r.created_at,
                )
                for r in recs
            ],
        )

    @app.post("/feedback", response_model=FeedbackAck)
    def post_feedback(body: FeedbackRequest) -> FeedbackAck:
        with write_lock:
            try:
                event = engine.ingest_feedback(body.rep_id, body.account_id, body.feedback)
            except KeyError as exc:
                raise HTTPException(status_code=404, detail=str(exc)) from exc
        return FeedbackAck(
            accepted=True,
            rep_id=event.rep_id,
            account_id=event.account_id,
            action=event.action,
            feedback=event.feedback,
            reward=event.reward,
            day=event.t,
        )

    @app.get("/metrics", response_model=MetricsResponse)
    def metrics() -> MetricsResponse:
        return MetricsResponse(**engine.metrics())

    return app
