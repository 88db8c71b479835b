"""Daily serve -> feedback -> update orchestration.

The Engine owns the synthetic book, the trained models, the bandit
policy, and the event log. All writes are serialized by the caller (the
HTTP service holds one lock); reads work off committed log state. Every
piece of bandit-relevant state is reconstructable from the log alone,
which is both the crash-recovery story and the test oracle.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import datagen, store
from .bandit import BanditPolicy, BanditPolicyParams
from .datagen import GenConfig
from .domain import (
    Account,
    ActionType,
    BanditContext,
    FeedbackEvent,
    FeedbackKind,
    Recommendation,
    Rep,
    ScoredAccount,
)
from .explain import (
    ALERT_FOR_ACTION,
    AlertKind,
    FeatureMapping,
    ModelKind,
    ThresholdRule,
    apply_thresholds,
    attach_fired_rules,
    render_template,
    validate_rules,
)
from .forecast import ForecastBundle, fit_engagement_models
from .optimizer import OptimizerParams
from . import optimizer as opt
from .uplift import BaseSpec, fit_t_learner

logger = logging.getLogger(__name__)

N_FEEDBACK_KINDS = len(FeedbackKind)
FEEDBACK_ORDER = tuple(FeedbackKind)
ACTION_ORDER = tuple(ActionType)


@dataclass(frozen=True)
class EngineConfig:
    """Everything a run needs, snapshotted into the manifest record.

    ``threshold_rules`` reference account features by their positional
    names ``x0..x{dim-1}``; fired rules are appended to the rendered
    alert as supporting bullets.
    """

    gen: GenConfig
    optimizer: OptimizerParams = field(default_factory=OptimizerParams)
    bandit: BanditPolicyParams = field(default_factory=BanditPolicyParams)
    scorer: str = "model"  # "model" | "oracle"
    cold_start_min_updates: int = 0
    product_name: str = "the product"
    threshold_rules: tuple[ThresholdRule, ...] = ()
    feature_mapping: FeatureMapping | None = None

    def __post_init__(self) -> None:
        if self.scorer not in ("model", "oracle"):
            raise ValueError("scorer must be 'model' or 'oracle'")
        if self.threshold_rules:
            validate_rules(self.threshold_rules, self.feature_names)

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(f"x{j}" for j in range(self.gen.account_dim))


@dataclass(frozen=True)
class RunManifest:
    run_id: str
    seed: int
    day: int
    n_recommendations: int


def context_dim(cfg: EngineConfig) -> int:
    # account features + rep features + [recency, alert count,
    # one-hot last feedback, one-hot alert category]
    return cfg.gen.account_dim + cfg.gen.rep_dim + 2 + N_FEEDBACK_KINDS + len(ACTION_ORDER)


class Engine:
    def __init__(self, config: EngineConfig, log: store.EventLog | None = None):
        self.config = config
        self.log = log if log is not None else store.EventLog()
        self.accounts, self.reps = datagen.generate_population(config.gen)
        self.account_by_id = {a.id: a for a in self.accounts}
        self.rep_by_id = {r.id: r for r in self.reps}
        self.uplift_model = None
        self.forecasts: ForecastBundle | None = None
        self.policy = BanditPolicy(context_dim(config), config.bandit, config.gen.seed)
        self._train_models()
        if len(self.log):
            self._replay_feedback()

    # --- training ---------------------------------------------------------

    def _train_models(self) -> None:
        """Fit the uplift and engagement models on a simulated history."""
        cfg = self.config.gen
        X = np.array([a.x for a in self.accounts])
        a_hist = datagen.assign_treatment(self.accounts, cfg)
        y_hist = datagen.simulate_outcomes(self.accounts, a_hist, cfg)
        try:
            self.uplift_model = fit_t_learner(X, y_hist, a_hist, BaseSpec())
        except Exception as exc:
            if self.config.scorer == "model":
                raise
            logger.info("uplift model training skipped in oracle mode (%s)", exc)
        targets = datagen.simulate_engagement_targets(self.accounts, cfg)
        self.forecasts = fit_engagement_models(self.accounts, targets, BaseSpec())

    # --- scoring ----------------------------------------------------------

    def scored_pool(self) -> list:
        assert self.forecasts is not None
        pool = []
        for acc in sorted(self.accounts, key=lambda a: a.id):
            if self.config.scorer == "oracle":
                y_u = float(acc.true_ite)
            else:
                y_u = float(self.uplift_model.predict_ite(acc.x.reshape(1, -1))[0])
            delta = self.forecasts.deltas(acc)
            pool.append(
                ScoredAccount(
                    account_id=acc.id,
                    d=acc.d,
                    y_u_raw=y_u,
                    delta_e=delta,
                    y_e_raw=opt.engagement_diff(delta),
                )
            )
        return opt.normalize_scores(pool)

    # --- log-derived views --------------------------------------------------

    def next_day(self) -> int:
        days = self.log.committed_days()
        return (days[-1] + 1) if days else 0

    def served_history(self) -> list[Recommendation]:
        out = []
        for rec in self.log.committed_records(store.KIND_RECOMMENDATION):
            p = rec["payload"]
            out.append(
                Recommendation(
                    account_id=p["account_id"],
                    rep_id=p["rep_id"],
                    action=ActionType(p["action"]),
                    g_rank=p["g_rank"],
                    r_rank=p["r_rank"],
                    a_value=p["a_value"],
                    explanation=p["explanation"],
                    created_at=rec["day"],
                )
            )
        return out

    def _alert_history(self, rep_id: str, account_id: str, today: int):
        """(time-since-last-alert, previous count, last feedback kind)."""
        last_day = None
        count = 0
        for rec in self.log.committed_records(store.KIND_RECOMMENDATION):
            p = rec["payload"]
            if p["rep_id"] == rep_id and p["account_id"] == account_id:
                count += 1
                last_day = rec["day"]
        last_feedback = None
        for rec in self.log.committed_records(store.KIND_FEEDBACK):
            p = rec["payload"]
            if p["rep_id"] == rep_id and p["account_id"] == account_id:
                last_feedback = FeedbackKind(p["feedback"])
        since = float(today - last_day) if last_day is not None else 365.0
        return since, count, last_feedback

    def build_context(
        self, account: Account, rep: Rep, today: int, alert_category: ActionType
    ) -> BanditContext:
        since, count, last_feedback = self._alert_history(rep.id, account.id, today)
        fb_onehot = np.zeros(N_FEEDBACK_KINDS)
        if last_feedback is not None:
            fb_onehot[FEEDBACK_ORDER.index(last_feedback)] = 1.0
        cat_onehot = np.zeros(len(ACTION_ORDER))
        cat_onehot[ACTION_ORDER.index(alert_category)] = 1.0
        # recency and alert count are squashed into [0, 1] so repeated
        # serving cannot grow the context (and the SGD gradients) unbounded
        x_r = np.concatenate(
            [[min(since, 365.0) / 365.0, min(count, 10.0) / 10.0], fb_onehot, cat_onehot]
        )
        return BanditContext(x_a=account.x, x_s=rep.s, x_r=x_r)

    # --- the daily pipeline ---------------------------------------------------

    def run_day(self) -> tuple[RunManifest, list[Recommendation]]:
        """score -> normalize -> filter -> LP -> match/rank -> cold-start
        action -> bandit action -> explanation, committed atomically."""
        day = self.next_day()
        cfg = self.config
        pool = self.scored_pool()
        eligible = opt.eligibility_filter(pool, self.served_history(), cfg.optimizer, day)
        staged: list[tuple[Recommendation, np.ndarray]] = []
        if eligible:
            params = self._fitted_capacity(cfg.optimizer, len(eligible), len(self.reps))
            lp = opt.build_lp(eligible, self.reps, params)
            assignment = opt.solve_lp(lp)
            matched = opt.match_and_rank(assignment, eligible, params)
            by_id = {s.account_id: s for s in eligible}
            for m in matched:
                scored = by_id[m.account_id]
                account = self.account_by_id[m.account_id]
                rep = self.rep_by_id[m.rep_id]
                cold_action = opt.recommend_action(scored, params)
                context = self.build_context(account, rep, day, cold_action)
                if self.policy.n_updates >= cfg.cold_start_min_updates:
                    rng = datagen.stream(cfg.gen.seed, f"select-day{day}-{m.account_id}")
                    action = self.policy.select_action(context.vector, rng)
                else:
                    action = cold_action
                explanation = self._explanation(scored, action)
                rec = Recommendation(
                    account_id=m.account_id,
                    rep_id=m.rep_id,
                    action=action,
                    g_rank=m.g_rank,
                    r_rank=m.r_rank,
                    a_value=m.a_value,
                    explanation=explanation,
                    created_at=day,
                )
                staged.append((rec, context.vector))

        run_id = f"run{day:05d}"
        self.log.append(store.KIND_RUN_STARTED, day, {"run_id": run_id})
        for rec, vec in staged:
            self.log.append(
                store.KIND_RECOMMENDATION,
                day,
                {
                    "account_id": rec.account_id,
                    "rep_id": rec.rep_id,
                    "action": rec.action.value,
                    "g_rank": rec.g_rank,
                    "r_rank": rec.r_rank,
                    "a_value": rec.a_value,
                    "explanation": rec.explanation,
                    "context": [float(v) for v in vec],
                },
            )
        manifest = RunManifest(
            run_id=run_id, seed=cfg.gen.seed, day=day, n_recommendations=len(staged)
        )
        self.log.append(
            store.KIND_RUN_COMMITTED, day, {"run_id": run_id, "n_recommendations": len(staged)}
        )
        return manifest, [rec for rec, _ in staged]

    @staticmethod
    def _fitted_capacity(params: OptimizerParams, pool_size: int, n_reps: int) -> OptimizerParams:
        """Shrink n_min on thin days so cooldown-starved pools stay feasible."""
        feasible_min = min(params.n_min, pool_size // n_reps)
        return replace(params, n_min=feasible_min) if feasible_min != params.n_min else params

    def _explanation(self, scored, action: ActionType) -> str:
        kind = ALERT_FOR_ACTION[action]
        account = self.account_by_id[scored.account_id]
        pu_now = account.engagement_now[0] if account.engagement_now else 0.0
        if kind is AlertKind.LOW_ENGAGEMENT:
            slots = {
                "d": scored.d,
                "product": self.config.product_name,
                "y": round(pu_now, 1),
                "dy": round(float(scored.delta_e[0]), 1),
            }
        elif kind is AlertKind.UPSELL_FLAG:
            slots = {"d": scored.d, "dy": round(scored.y_u_raw, 1)}
        else:
            slots = {"d": scored.d}
        text = render_template(kind, slots)
        if self.config.threshold_rules:
            outputs = self._rule_outputs(account)
            applicable = [r for r in self.config.threshold_rules
                          if (r.feature_name, r.model) in outputs]
            fired = apply_thresholds(applicable, outputs)
            text = attach_fired_rules(text, fired, outputs, self.config.feature_mapping)
        return text

    def _rule_outputs(self, account: Account) -> dict[tuple[str, ModelKind], float]:
        """Per-feature contributions of each model at this account.

        Only linear bases expose per-feature contributions; stump bases
        simply publish no outputs, so their rules never fire.
        """
        outputs: dict[tuple[str, ModelKind], float] = {}
        names = self.config.feature_names
        if self.uplift_model is not None:
            for kind, model in (
                (ModelKind.TREATMENT_MODEL, self.uplift_model.f1),
                (ModelKind.CONTROL_MODEL, self.uplift_model.f0),
            ):
                if hasattr(model, "coefs"):
                    for j, name in enumerate(names):
                        outputs[(name, kind)] = float(model.coefs[j] * account.x[j])
        if self.forecasts is not None:
            base = self.forecasts.forecasters[0].base
            if hasattr(base, "coefs"):
                for j, e_ix in enumerate(account.e_idx):
                    outputs[(names[e_ix], ModelKind.FORECASTER)] = float(
                        base.coefs[j] * account.x[e_ix]
                    )
        return outputs

    # --- serving ----------------------------------------------------------------

    def latest_committed_day(self) -> int | None:
        days = self.log.committed_days()
        return days[-1] if days else None

    def serve_recommendations(self, rep_id: str) -> list[Recommendation]:
        if rep_id not in self.rep_by_id:
            raise KeyError(f"unknown rep {rep_id!r}")
        day = self.latest_committed_day()
        if day is None:
            return []
        recs = [r for r in self.served_history() if r.rep_id == rep_id and r.created_at == day]
        return sorted(recs, key=lambda r: r.r_rank)

    def manifest_for(self, run_id: str) -> RunManifest:
        for rec in self.log.committed_records(store.KIND_RUN_COMMITTED):
            if rec["payload"]["run_id"] == run_id:
                return RunManifest(
                    run_id=run_id,
                    seed=self.config.gen.seed,
                    day=rec["day"],
                    n_recommendations=rec["payload"]["n_recommendations"],
                )
        raise KeyError(f"unknown run {run_id!r}")

    # --- feedback -------------------------------------------------------------

    def _find_served(self, rep_id: str, account_id: str) -> dict | None:
        day = self.latest_committed_day()
        if day is None:
            return None
        for rec in self.log.committed_records(store.KIND_RECOMMENDATION):
            if (
                rec["day"] == day
                and rec["payload"]["rep_id"] == rep_id
                and rec["payload"]["account_id"] == account_id
            ):
                return rec
        return None

    def ingest_feedback(self, rep_id: str, account_id: str, feedback: FeedbackKind) -> FeedbackEvent:
        """Log the event and update the policy; duplicate (rep, account,
        day) submissions are idempotent with last-wins semantics."""
        served = self._find_served(rep_id, account_id)
        if served is None:
            raise KeyError(f"no served recommendation for rep {rep_id!r} / account {account_id!r}")
        day = served["day"]
        event = FeedbackEvent.from_feedback(
            rep_id, account_id, ActionType(served["payload"]["action"]), feedback, day
        )
        duplicate = any(
            f["payload"]["rep_id"] == rep_id
            and f["payload"]["account_id"] == account_id
            and f["day"] == day
            for f in self.log.records(store.KIND_FEEDBACK)
        )
        self.log.append(
            store.KIND_FEEDBACK,
            day,
            {
                "rep_id": rep_id,
                "account_id": account_id,
                "action": event.action.value,
                "feedback": feedback.value,
                "reward": event.reward,
                "context": served["payload"]["context"],
            },
        )
        if duplicate:
            self._replay_feedback()
        else:
            self.policy.update(
                np.array(served["payload"]["context"]), event.action, float(event.reward)
            )
        return event

    def _effective_feedback(self) -> list[dict]:
        """Feedback records that are the last for their (rep, account, day)."""
        last_seq: dict[tuple[str, str, int], int] = {}
        for rec in self.log.records(store.KIND_FEEDBACK):
            key = (rec["payload"]["rep_id"], rec["payload"]["account_id"], rec["day"])
            last_seq[key] = rec["seq"]
        winners = set(last_seq.values())
        return [r for r in self.log.records(store.KIND_FEEDBACK) if r["seq"] in winners]

    def _replay_feedback(self) -> None:
        self.policy = BanditPolicy(context_dim(self.config), self.config.bandit, self.config.gen.seed)
        for rec in self._effective_feedback():
            self.policy.update(
                np.array(rec["payload"]["context"]),
                ActionType(rec["payload"]["action"]),
                float(rec["payload"]["reward"]),
            )

    def rebuild_policy(self) -> BanditPolicy:
        """A fresh policy rebuilt purely from the log (the replay oracle)."""
        policy = BanditPolicy(context_dim(self.config), self.config.bandit, self.config.gen.seed)
        for rec in self._effective_feedback():
            policy.update(
                np.array(rec["payload"]["context"]),
                ActionType(rec["payload"]["action"]),
                float(rec["payload"]["reward"]),
            )
        return policy

    # --- metrics ----------------------------------------------------------------

    def metrics(self) -> dict:
        feedback_counts = {k.value: 0 for k in FeedbackKind}
        cumulative = 0
        day_rows: dict[int, dict] = {}
        for rec in self.log.committed_records(store.KIND_RECOMMENDATION):
            row = day_rows.setdefault(
                rec["day"],
                {"day": rec["day"], "served": 0, "reward": 0,
                 "actions": {a.value: 0 for a in ActionType},
                 "feedback": {k.value: 0 for k in FeedbackKind}},
            )
            row["served"] += 1
            row["actions"][rec["payload"]["action"]] += 1
        for rec in self._effective_feedback():
            feedback_counts[rec["payload"]["feedback"]] += 1
            cumulative += rec["payload"]["reward"]
            if rec["day"] in day_rows:
                day_rows[rec["day"]]["reward"] += rec["payload"]["reward"]
                day_rows[rec["day"]]["feedback"][rec["payload"]["feedback"]] += 1
        total_served = sum(r["served"] for r in day_rows.values()) or 1
        action_totals = {a.value: 0 for a in ActionType}
        for row in day_rows.values():
            for a, n in row["actions"].items():
                action_totals[a] += n
        return {
            "cumulative_reward": cumulative,
            "feedback_counts": feedback_counts,
            "selection_shares": {a: n / total_served for a, n in action_totals.items()},
            "days": [day_rows[d] for d in sorted(day_rows)],
        }
