"""Offline and observational evaluation.

Difference-in-differences with relative treatment effect and a
robust-variance p-value, coarsened exact matching, placebo pre-tests,
the net-ratio metric, recommendation precision metrics, and the
component-ablation study over the optimizer pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from . import optimizer as opt
from .datagen import (
    GenConfig,
    RealizedOutcome,
    realize_outcomes,
    realized_bookings,
    simulate_engagement_targets,
)
from .domain import (
    Account,
    ActionType,
    Group,
    PanelObservation,
    PanelTimeObservation,
    Period,
    Recommendation,
    Rep,
    ScoredAccount,
)
from .optimizer import OptimizerParams


def net_ratio(renewal_plus_addon_bookings: float, renewal_target: float) -> float:
    """Bookings over target; the experiment's primary response metric."""
    if renewal_target <= 0:
        raise ValueError("renewal target must be positive")
    return renewal_plus_addon_bookings / renewal_target


@dataclass(frozen=True)
class DidResult:
    tau_hat: float
    rte: float
    means: dict[tuple[Group, Period], float]
    se: float
    p_value: float
    n: int


def did_estimate(panel: Sequence[PanelObservation]) -> DidResult:
    """Exact means-based DiD plus an interaction-regression p-value.

    tau = (treat post - treat pre) - (ctrl post - ctrl pre); RTE divides
    by the control trend. The p-value comes from the group x period
    interaction with HC1 heteroskedasticity-robust errors.
    """
    cells: dict[tuple[Group, Period], list[float]] = {
        (g, p): [] for g in Group for p in Period
    }
    for obs in panel:
        cells[(obs.group, obs.period)].append(obs.outcome)
    empty = [k for k, v in cells.items() if not v]
    if empty:
        raise ValueError(f"every group-period cell must be non-empty; missing {empty}")
    means = {k: float(np.mean(v)) for k, v in cells.items()}
    treat_trend = means[(Group.TREAT, Period.POST)] - means[(Group.TREAT, Period.PRE)]
    ctrl_trend = means[(Group.CTRL, Period.POST)] - means[(Group.CTRL, Period.PRE)]
    tau = treat_trend - ctrl_trend
    if ctrl_trend == 0.0:
        raise ValueError("control trend is zero; relative treatment effect undefined")
    rte = tau / ctrl_trend

    y = np.array([obs.outcome for obs in panel])
    g = np.array([1.0 if obs.group is Group.TREAT else 0.0 for obs in panel])
    p = np.array([1.0 if obs.period is Period.POST else 0.0 for obs in panel])
    design = np.column_stack([np.ones(len(y)), g, p, g * p])
    beta, se = _ols_hc1(design, y)
    df = max(len(y) - design.shape[1], 1)
    t_stat = beta[3] / se[3] if se[3] > 0 else math.inf
    p_value = float(2.0 * stats.t.sf(abs(t_stat), df))
    return DidResult(tau_hat=tau, rte=rte, means=means, se=float(se[3]), p_value=p_value, n=len(y))


def _ols_hc1(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n, k = X.shape
    xtx_inv = np.linalg.inv(X.T @ X)
    beta = xtx_inv @ X.T @ y
    resid = y - X @ beta
    meat = (X * resid[:, None] ** 2).T @ X
    vcov = xtx_inv @ meat @ xtx_inv * (n / max(n - k, 1))
    return beta, np.sqrt(np.diag(vcov))


def collapse_time_panel(
    rows: Sequence[PanelTimeObservation], cut: int
) -> list[PanelObservation]:
    """Average each unit's outcomes into Pre (t < cut) / Post (t >= cut) cells."""
    acc: dict[tuple[str, Period], list[float]] = {}
    meta: dict[str, PanelTimeObservation] = {}
    for r in rows:
        period = Period.POST if r.t >= cut else Period.PRE
        acc.setdefault((r.unit_id, period), []).append(r.outcome)
        meta.setdefault(r.unit_id, r)
    out = []
    for (unit_id, period), values in sorted(acc.items(), key=lambda kv: (kv[0][0], kv[0][1].value)):
        first = meta[unit_id]
        out.append(
            PanelObservation(unit_id, first.group, period, float(np.mean(values)), first.covariates)
        )
    return out


def did_from_time_panel(rows: Sequence[PanelTimeObservation], treatment_start: int) -> DidResult:
    return did_estimate(collapse_time_panel(rows, treatment_start))


@dataclass(frozen=True)
class PlaceboReport:
    results: list[DidResult]
    cut_points: tuple[int, ...]
    alpha: float
    parallel_trends_plausible: bool


def placebo_pretest(
    pre_rows: Sequence[PanelTimeObservation],
    cut_points: Sequence[int] | None = None,
    alpha: float = 0.05,
) -> PlaceboReport:
    """Time-based A/A tests inside the pre-period.

    Each pseudo cut treats an earlier time point as if treatment started
    there; parallel trends are plausible iff no placebo is significant at
    alpha with a Bonferroni correction over the cuts.
    """
    times = sorted({r.t for r in pre_rows})
    if len(times) < 2:
        raise ValueError("placebo pre-test needs at least 2 pre-period time points")
    cuts = tuple(cut_points) if cut_points is not None else tuple(times[1:])
    if not cuts:
        raise ValueError("no pseudo cut points given")
    for c in cuts:
        if not (times[0] < c <= times[-1]):
            raise ValueError(f"cut {c} does not split the pre-period {times}")
    results = [did_from_time_panel(pre_rows, cut) for cut in cuts]
    threshold = alpha / len(cuts)
    plausible = all(r.p_value >= threshold for r in results)
    return PlaceboReport(results, cuts, alpha, plausible)


@dataclass(frozen=True)
class CemUnit:
    unit_id: str
    group: Group
    covariates: np.ndarray


@dataclass(frozen=True)
class CemResult:
    matched_treat: tuple[str, ...]
    matched_ctrl: tuple[str, ...]
    weights: dict[str, float]
    n_strata: int
    dropped_treat: int
    dropped_ctrl: int


def cem_match(
    units: Sequence[CemUnit | PanelObservation], bin_edges: Sequence[np.ndarray]
) -> CemResult:
    """Coarsened exact matching on binned covariate signatures.

    Strata lacking either group are dropped; matched controls get weights
    that reproduce the treated stratum distribution (treated weight 1).
    """
    if not bin_edges:
        raise ValueError("need at least one covariate with bin edges")
    seen: dict[str, CemUnit] = {}
    for u in units:
        if u.unit_id not in seen:
            seen[u.unit_id] = CemUnit(u.unit_id, u.group, np.asarray(u.covariates, dtype=float))
    strata: dict[tuple[int, ...], dict[Group, list[str]]] = {}
    for u in seen.values():
        if u.covariates.shape[0] < len(bin_edges):
            raise ValueError(f"unit {u.unit_id} has fewer covariates than the coarsening spec")
        sig = tuple(int(np.digitize(u.covariates[i], edges)) for i, edges in enumerate(bin_edges))
        strata.setdefault(sig, {Group.TREAT: [], Group.CTRL: []})[u.group].append(u.unit_id)
    matched = {sig: gs for sig, gs in strata.items() if gs[Group.TREAT] and gs[Group.CTRL]}
    matched_treat = [uid for gs in matched.values() for uid in gs[Group.TREAT]]
    matched_ctrl = [uid for gs in matched.values() for uid in gs[Group.CTRL]]
    total_t, total_c = len(matched_treat), len(matched_ctrl)
    weights: dict[str, float] = {uid: 1.0 for uid in matched_treat}
    for gs in matched.values():
        m_t, m_c = len(gs[Group.TREAT]), len(gs[Group.CTRL])
        w = (m_t / m_c) * (total_c / total_t) if total_t else 0.0
        for uid in gs[Group.CTRL]:
            weights[uid] = w
    n_treat = sum(1 for u in seen.values() if u.group is Group.TREAT)
    n_ctrl = len(seen) - n_treat
    return CemResult(
        matched_treat=tuple(sorted(matched_treat)),
        matched_ctrl=tuple(sorted(matched_ctrl)),
        weights=weights,
        n_strata=len(matched),
        dropped_treat=n_treat - total_t,
        dropped_ctrl=n_ctrl - total_c,
    )


def standardized_mean_difference(
    units: Sequence[CemUnit], covariate: int, weights: Mapping[str, float] | None = None
) -> float:
    """|treat mean - ctrl mean| / pooled sd, optionally weighted."""
    t_vals = np.array([u.covariates[covariate] for u in units if u.group is Group.TREAT])
    c_vals = np.array([u.covariates[covariate] for u in units if u.group is Group.CTRL])
    if weights is not None:
        t_w = np.array([weights.get(u.unit_id, 0.0) for u in units if u.group is Group.TREAT])
        c_w = np.array([weights.get(u.unit_id, 0.0) for u in units if u.group is Group.CTRL])
        t_mean = np.average(t_vals, weights=t_w) if t_w.sum() else 0.0
        c_mean = np.average(c_vals, weights=c_w) if c_w.sum() else 0.0
    else:
        t_mean, c_mean = t_vals.mean(), c_vals.mean()
    pooled = math.sqrt((t_vals.var() + c_vals.var()) / 2.0)
    if pooled == 0:
        return 0.0
    return abs(t_mean - c_mean) / pooled


@dataclass(frozen=True)
class PrecisionMetrics:
    p_ups: float | None
    p_ch: float | None
    p_rec: float | None
    p_low: float | None

    def as_dict(self) -> dict[str, float | None]:
        return {"p_ups": self.p_ups, "p_ch": self.p_ch, "p_rec": self.p_rec, "p_low": self.p_low}


def precision_metrics(
    recommendations: Sequence[Recommendation], outcomes: Mapping[str, RealizedOutcome]
) -> PrecisionMetrics:
    """Hit rates of the served actions against realized outcomes.

    Closed upsells and recoveries require the account to actually have
    been outreached (an over-capacity rec a rep never worked cannot
    close); would-churn-without-outreach is the structural counterfactual
    and does not. Denominators with no recommendations stay undefined
    (None), never 0.
    """
    ups = [r for r in recommendations if r.action is ActionType.PROMOTE_UPSELL]
    churn = [r for r in recommendations if r.action is ActionType.PREVENT_CHURN]
    low = [r for r in recommendations if r.action is ActionType.BOOST_ENGAGEMENT]

    def rate(recs: list[Recommendation], hit) -> float | None:
        if not recs:
            return None
        return sum(1 for r in recs if hit(outcomes[r.account_id])) / len(recs)

    return PrecisionMetrics(
        p_ups=rate(ups, lambda o: o.outreached and o.upsell_if_outreached),
        p_ch=rate(churn, lambda o: o.churn_without_outreach),
        p_rec=rate(churn, lambda o: o.outreached and o.retained_via_outreach),
        p_low=rate(low, lambda o: o.churn_without_outreach),
    )


class AblationVariant(str, Enum):
    FULL = "Full"
    A_NO_WEIGHTING = "A_NoWeighting"
    B_NO_CAPACITY = "B_NoCapacity"
    C_SIMPLIFIED_RULES = "C_SimplifiedRules"


@dataclass(frozen=True)
class AblationRow:
    variant: AblationVariant
    metrics: PrecisionMetrics
    b_total: float
    b_total_rank: int
    constraints_met: float
    over_capacity_ratio: float
    n_recommended: int


@dataclass(frozen=True)
class AblationReport:
    rows: list[AblationRow]

    def row(self, variant: AblationVariant) -> AblationRow:
        return next(r for r in self.rows if r.variant is variant)

    def as_table(self) -> list[dict]:
        return [
            {
                "variant": r.variant.value,
                "p_ups": r.metrics.p_ups,
                "p_ch": r.metrics.p_ch,
                "p_rec": r.metrics.p_rec,
                "p_low": r.metrics.p_low,
                "b_total_rank": r.b_total_rank,
                "constraints_met": r.constraints_met,
                "over_capacity": r.over_capacity_ratio,
                "n_recommended": r.n_recommended,
            }
            for r in self.rows
        ]


def oracle_scored_pool(accounts: Sequence[Account], config: GenConfig) -> list[ScoredAccount]:
    """Score accounts from ground truth: uplift = true effect, engagement
    deltas straight from the generator's drift model."""
    targets = simulate_engagement_targets(accounts, config)
    pool = []
    for i, acc in enumerate(accounts):
        delta = targets[i] - np.array(acc.engagement_now)
        pool.append(
            ScoredAccount(
                account_id=acc.id,
                d=acc.d,
                y_u_raw=float(acc.true_ite),
                delta_e=delta,
                y_e_raw=opt.engagement_diff(delta),
            )
        )
    return opt.normalize_scores(sorted(pool, key=lambda s: s.account_id))


def _matching_feasibility(
    matched: Sequence[opt.MatchedPair], account_ids: Sequence[str], rep_ids: Sequence[str],
    params: OptimizerParams,
) -> tuple[float, float]:
    """(fraction of capacity+assignment constraints met, max over-capacity ratio)."""
    per_account: dict[str, int] = {}
    per_rep: dict[str, int] = {r: 0 for r in rep_ids}
    for m in matched:
        per_account[m.account_id] = per_account.get(m.account_id, 0) + 1
        per_rep[m.rep_id] += 1
    checks = []
    for acc_id in account_ids:
        checks.append(per_account.get(acc_id, 0) <= 1)
    for rep_id in rep_ids:
        count = per_rep[rep_id]
        checks.append(params.n_min <= count <= params.n_max)
    over = max(per_rep.values()) / params.n_max if params.n_max else math.inf
    return sum(checks) / len(checks), over


def run_ablation(
    accounts: Sequence[Account],
    reps: Sequence[Rep],
    config: GenConfig,
    params: OptimizerParams,
    variants: Sequence[AblationVariant] = tuple(AblationVariant),
    oracle_outcomes: bool = False,
) -> AblationReport:
    """Run the optimizer+action pipeline per variant on identical data.

    Model A fixes the blend weight at 0.5, Model B drops the capacity
    rows, Model C replaces the action heuristic with the uplift-sign rule.
    Feasibility is always judged against the full constraint set, so only
    B can violate it. A rep only works the top n_max recommendations by
    within-rep rank; the rest are served but never outreached. Bookings
    are ranked descending; ties keep variant order.
    """
    pool = oracle_scored_pool(accounts, config)
    results: list[tuple[AblationVariant, list[Recommendation], set[str], float, float]] = []
    for variant in variants:
        weight_fn = (lambda d: 0.5) if variant is AblationVariant.A_NO_WEIGHTING else None
        include_capacity = variant is not AblationVariant.B_NO_CAPACITY
        lp = opt.build_lp(pool, reps, params, weight_fn=weight_fn, include_capacity=include_capacity)
        assignment = opt.solve_lp(lp)
        matched = opt.match_and_rank(assignment, pool, params, weight_fn=weight_fn)
        by_id = {s.account_id: s for s in pool}
        recs = []
        for m in matched:
            scored = by_id[m.account_id]
            if variant is AblationVariant.C_SIMPLIFIED_RULES:
                action = opt.simplified_action(scored)
            else:
                action = opt.recommend_action(scored, params, weight_fn=weight_fn)
            recs.append(
                Recommendation(m.account_id, m.rep_id, action, m.g_rank, m.r_rank, m.a_value, "", 0)
            )
        worked = {m.account_id for m in matched if m.r_rank <= params.n_max}
        met, over = _matching_feasibility(matched, [s.account_id for s in pool], [r.id for r in reps], params)
        results.append((variant, recs, worked, met, over))

    bookings = {v: realized_bookings(accounts, worked, config) for v, _, worked, _, _ in results}
    order = sorted(variants, key=lambda v: -bookings[v])
    ranks = {v: i + 1 for i, v in enumerate(order)}

    rows = []
    for variant, recs, worked, met, over in results:
        outcomes = realize_outcomes(accounts, worked, config, oracle=oracle_outcomes)
        rows.append(
            AblationRow(
                variant=variant,
                metrics=precision_metrics(recs, outcomes),
                b_total=bookings[variant],
                b_total_rank=ranks[variant],
                constraints_met=met,
                over_capacity_ratio=over,
                n_recommended=len(recs),
            )
        )
    return AblationReport(rows=rows)
