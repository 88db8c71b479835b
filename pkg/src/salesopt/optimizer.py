"""Constrained account-rep assignment.

Scores are min-max normalized to [0, 100] over the candidate pool, blended
by a sigmoid weight on days-to-RTCD, filtered by thresholds and the 14-day
cooldown, and assigned through an LP relaxation of the matching MIP.
Matched pairs are ranked by their fractional assignment value, and a
four-branch heuristic picks the cold-start action per account.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from . import simplex
from .domain import ASSIGN_TOL, ActionType, AssignmentMatrix, Recommendation, Rep, ScoredAccount
from .simplex import InfeasibleError, SolverError

WeightFn = Callable[[float], float]


@dataclass(frozen=True)
class OptimizerParams:
    """Knobs of the assignment LP and the eligibility filters.

    ``k < 0`` makes the uplift weight decrease with days-to-RTCD, so
    monetization dominates close to the renewal date; the sign is
    configurable because the sigmoid as printed and the prose prioritize
    opposite ends. ``d0`` defaults to one quarter.
    """

    k: float = -0.05
    d0: float = 90.0
    n_min: int = 0
    n_max: int = 10
    t_u: float = 0.0
    t_e: float = 0.0
    cooldown_days: int = 14
    combiner: str = "or"  # "or" | "and"
    assignment_mode: str = "at_most_one"  # "at_most_one" | "exactly_one"

    def __post_init__(self) -> None:
        if not (0 <= self.n_min <= self.n_max):
            raise ValueError("need 0 <= n_min <= n_max")
        if self.cooldown_days < 0:
            raise ValueError("cooldown_days must be >= 0")
        if self.combiner not in ("or", "and"):
            raise ValueError("combiner must be 'or' or 'and'")
        if self.assignment_mode not in ("at_most_one", "exactly_one"):
            raise ValueError("assignment_mode must be 'at_most_one' or 'exactly_one'")


def weight(d: float, k: float, d0: float) -> float:
    """Sigmoid blend between uplift and engagement: 1/(1 + e^{-k(d - d0)})."""
    z = k * (d - d0)
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-min(z, 700.0)))
    ez = math.exp(max(z, -700.0))
    return ez / (1.0 + ez)


def engagement_diff(delta_e: np.ndarray) -> float:
    """Largest absolute change over the engagement metrics."""
    delta_e = np.asarray(delta_e, dtype=float)
    if delta_e.size == 0:
        raise ValueError("delta_e must contain at least one engagement metric")
    return float(np.max(np.abs(delta_e)))


def _minmax(values: np.ndarray) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if hi - lo < 1e-12:
        return np.full(values.shape, 50.0)
    return (values - lo) / (hi - lo) * 100.0


def normalize_scores(pool: Sequence[ScoredAccount]) -> list[ScoredAccount]:
    """Affine min-max map of raw scores onto [0, 100] over this pool."""
    if not pool:
        raise ValueError("cannot normalize an empty pool")
    y_u = _minmax(np.array([s.y_u_raw for s in pool]))
    y_e = _minmax(np.array([s.y_e_raw for s in pool]))
    return [replace(s, y_u=float(u), y_e=float(e)) for s, u, e in zip(pool, y_u, y_e)]


def eligibility_filter(
    pool: Sequence[ScoredAccount],
    history: Iterable[Recommendation],
    params: OptimizerParams,
    today: int,
) -> list[ScoredAccount]:
    """Keep accounts passing the score thresholds and outside the cooldown.

    An account recommended on any day in [today - cooldown, today - 1] is
    excluded regardless of scores.
    """
    cooling = set()
    for rec in history:
        if rec.created_at > today:
            raise ValueError("history contains recommendations from the future")
        if today - params.cooldown_days <= rec.created_at <= today - 1:
            cooling.add(rec.account_id)
    out = []
    for s in pool:
        if s.y_u is None or s.y_e is None:
            raise ValueError("eligibility_filter requires normalized scores")
        if s.account_id in cooling:
            continue
        passes_u = s.y_u > params.t_u
        passes_e = s.y_e > params.t_e
        passes = (passes_u or passes_e) if params.combiner == "or" else (passes_u and passes_e)
        if passes:
            out.append(s)
    return out


def objective_coefficient(s: ScoredAccount, params: OptimizerParams, weight_fn: WeightFn | None = None) -> float:
    """w(d) * y_u + (1 - w(d)) * y_e; identical across reps for one account."""
    if s.y_u is None or s.y_e is None:
        raise ValueError("objective needs normalized scores; run normalize_scores first")
    w = weight_fn(s.d) if weight_fn is not None else weight(s.d, params.k, params.d0)
    return w * s.y_u + (1.0 - w) * s.y_e


@dataclass(frozen=True)
class LpInstance:
    """The assignment LP over variables a_ij (account-major layout)."""

    c: np.ndarray  # length N*M; c[i*M + j] depends only on i
    A: np.ndarray
    senses: tuple[str, ...]
    b: np.ndarray
    account_ids: tuple[str, ...]
    rep_ids: tuple[str, ...]
    assignment_mode: str
    n_min: int
    n_max: int
    bounds: tuple[float, float] = (0.0, 1.0)


def build_lp(
    pool: Sequence[ScoredAccount],
    reps: Sequence[Rep],
    params: OptimizerParams,
    weight_fn: WeightFn | None = None,
    include_capacity: bool = True,
) -> LpInstance:
    """Assemble objective and constraint rows.

    Per-account rows cap each row sum at (or pin it to) one, which also
    bounds every variable inside [0, 1]; per-rep rows carry the capacity
    interval. ``include_capacity=False`` drops the capacity rows (ablation
    Model B).
    """
    if not pool or not reps:
        raise ValueError("pool and reps must be non-empty")
    n, m = len(pool), len(reps)
    if params.assignment_mode == "exactly_one" and include_capacity:
        if n > m * params.n_max:
            raise InfeasibleError(
                f"every account needs a rep but {m} reps x n_max={params.n_max} < {n} accounts"
            )
        if n < m * params.n_min:
            raise InfeasibleError(
                f"reps need n_min={params.n_min} accounts each but only {n} are available"
            )
    if include_capacity and n < m * params.n_min:
        raise InfeasibleError(
            f"reps need n_min={params.n_min} accounts each but only {n} are eligible"
        )
    coefs = np.array([objective_coefficient(s, params, weight_fn) for s in pool])
    c = np.repeat(coefs, m)
    rows: list[np.ndarray] = []
    senses: list[str] = []
    b: list[float] = []
    for i in range(n):
        row = np.zeros(n * m)
        row[i * m : (i + 1) * m] = 1.0
        rows.append(row)
        senses.append(simplex.EQ if params.assignment_mode == "exactly_one" else simplex.LE)
        b.append(1.0)
    if include_capacity:
        for j in range(m):
            row = np.zeros(n * m)
            row[j::m] = 1.0
            rows.append(row)
            senses.append(simplex.LE)
            b.append(float(params.n_max))
            if params.n_min > 0:
                rows.append(row)
                senses.append(simplex.GE)
                b.append(float(params.n_min))
    return LpInstance(
        c=c,
        A=np.array(rows),
        senses=tuple(senses),
        b=np.array(b),
        account_ids=tuple(s.account_id for s in pool),
        rep_ids=tuple(r.id for r in reps),
        assignment_mode=params.assignment_mode,
        n_min=params.n_min if include_capacity else 0,
        n_max=params.n_max if include_capacity else len(pool),
    )


def solve_lp(lp: LpInstance) -> AssignmentMatrix:
    """Solve to optimality and assert the solution is clean before returning."""
    result = simplex.solve(lp.c, lp.A, lp.senses, lp.b)
    n, m = len(lp.account_ids), len(lp.rep_ids)
    entries = result.x.reshape(n, m)
    _assert_solution(entries, lp)
    return AssignmentMatrix(
        entries=np.clip(entries, 0.0, 1.0), account_index=lp.account_ids, rep_index=lp.rep_ids
    )


def _assert_solution(entries: np.ndarray, lp: LpInstance) -> None:
    if entries.min() < -ASSIGN_TOL or entries.max() > 1 + ASSIGN_TOL:
        raise SolverError(f"solution leaves [0, 1]: range [{entries.min()}, {entries.max()}]")
    row_sums = entries.sum(axis=1)
    if lp.assignment_mode == "exactly_one":
        if np.max(np.abs(row_sums - 1.0)) > ASSIGN_TOL:
            raise SolverError("exactly-one assignment rows violated")
    elif row_sums.max() > 1 + ASSIGN_TOL:
        raise SolverError("at-most-one assignment rows violated")
    residual = lp.A @ entries.ravel()
    for i, (s, rhs) in enumerate(zip(lp.senses, lp.b)):
        r = residual[i] - rhs
        if (s == simplex.LE and r > ASSIGN_TOL) or (s == simplex.GE and r < -ASSIGN_TOL) or (
            s == simplex.EQ and abs(r) > ASSIGN_TOL
        ):
            raise SolverError(f"constraint row {i} violated by {r:.3g}")


@dataclass(frozen=True)
class MatchedPair:
    account_id: str
    rep_id: str
    a_value: float
    g_rank: int
    r_rank: int


def match_and_rank(
    assignment: AssignmentMatrix, pool: Sequence[ScoredAccount], params: OptimizerParams,
    weight_fn: WeightFn | None = None,
) -> list[MatchedPair]:
    """Round a_ij to matches and rank them by fractional value.

    Global rank orders matched pairs by a_value descending, ties broken by
    objective coefficient then account id; the within-rep rank is the same
    order restricted to each rep.
    """
    by_id = {s.account_id: s for s in pool}
    matched: list[tuple[float, float, str, str]] = []
    for i, acc_id in enumerate(assignment.account_index):
        for j, rep_id in enumerate(assignment.rep_index):
            a = float(assignment.entries[i, j])
            if math.floor(a + 0.5) >= 1:
                coef = objective_coefficient(by_id[acc_id], params, weight_fn)
                matched.append((a, coef, acc_id, rep_id))
    matched.sort(key=lambda t: (-t[0], -t[1], t[2], t[3]))
    out: list[MatchedPair] = []
    per_rep: dict[str, int] = {}
    for g, (a, _, acc_id, rep_id) in enumerate(matched, start=1):
        r = per_rep.get(rep_id, 0) + 1
        per_rep[rep_id] = r
        out.append(MatchedPair(acc_id, rep_id, a, g, r))
    return out


def recommend_action(
    scored: ScoredAccount, params: OptimizerParams, weight_fn: WeightFn | None = None
) -> ActionType:
    """Cold-start action heuristic, exactly the printed four branches.

    The monetization/engagement comparison uses the normalized scores; the
    upsell-vs-churn branch tests the sign of the raw uplift. The
    boost-engagement branch condition (min >= max of |deltas|) only fires
    when all deltas have equal magnitude, which is kept verbatim.
    """
    if scored.y_u is None or scored.y_e is None:
        raise ValueError("recommend_action requires normalized scores")
    w = weight_fn(scored.d) if weight_fn is not None else weight(scored.d, params.k, params.d0)
    monetization = w * scored.y_u
    engagement = (1.0 - w) * scored.y_e
    abs_deltas = np.abs(np.asarray(scored.delta_e, dtype=float))
    if monetization <= engagement:
        if abs_deltas.size and float(abs_deltas.min()) >= float(abs_deltas.max()):
            return ActionType.BOOST_ENGAGEMENT
        return ActionType.PROMOTE_UPSELL
    if scored.y_u_raw > 0:
        return ActionType.PROMOTE_UPSELL
    return ActionType.PREVENT_CHURN


def simplified_action(scored: ScoredAccount) -> ActionType:
    """Ablation Model C: monetization sign only, no engagement branch."""
    return ActionType.PROMOTE_UPSELL if scored.y_u_raw > 0 else ActionType.PREVENT_CHURN
