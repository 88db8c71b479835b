"""Deterministic synthetic-population generator with a known structural model.

Every quantity a downstream layer estimates is available here in closed
form: individual treatment effects, expected bandit rewards per action,
injected panel effects. Generators are pure functions of (config, seed)
using counter-based Philox streams, so identical seeds give bit-identical
output on any platform.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .domain import (
    Account,
    ActionType,
    FeedbackEvent,
    FeedbackKind,
    Group,
    PanelObservation,
    PanelTimeObservation,
    Period,
    Rep,
)

ENGAGEMENT_METRICS = ("pu", "pa")


def stream(seed: int, name: str) -> np.random.Generator:
    """A named, independent Philox substream of the run seed."""
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(key,))))


def _sigmoid(z: np.ndarray | float) -> np.ndarray | float:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -700, 700)))


@dataclass(frozen=True)
class EffectSpec:
    """tau(x) = intercept + sum coefs[i] * x[indices[i]]; linear by design."""

    intercept: float = 1.0
    coefs: tuple[float, ...] = (1.0, -0.8, 0.6)
    indices: tuple[int, ...] = (0, 1, 2)

    def tau(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        out = np.full(x.shape[0], self.intercept)
        for c, i in zip(self.coefs, self.indices):
            out = out + c * x[:, i]
        return out

    @property
    def mean(self) -> float:
        """Population mean of tau under x ~ N(0, I)."""
        return self.intercept

    @property
    def sd(self) -> float:
        """Population standard deviation of tau under x ~ N(0, I)."""
        return math.sqrt(sum(c * c for c in self.coefs))


@dataclass(frozen=True)
class BaselineSpec:
    """baseline(x) = intercept + coefs . x + nonlin_scale * sin(1.5 x0) * x1."""

    intercept: float = 10.0
    coefs: tuple[float, ...] | None = None
    nonlin_scale: float = 0.0

    def coef_vector(self, dim: int) -> np.ndarray:
        if self.coefs is not None:
            if len(self.coefs) != dim:
                raise ValueError(f"baseline coefs length {len(self.coefs)} != account dim {dim}")
            return np.array(self.coefs)
        return np.array([5.0 * (0.8**j) * (-1.0) ** j for j in range(dim)])

    def value(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        out = self.intercept + x @ self.coef_vector(x.shape[1])
        if self.nonlin_scale:
            out = out + self.nonlin_scale * np.sin(1.5 * x[:, 0]) * x[:, 1]
        return out


@dataclass(frozen=True)
class ActionEnv:
    """Feedback distribution of one action as a function of context.

    p_click = sigmoid(click_bias + click_w . x); p_dismiss is the same form
    scaled into the remaining mass. ``const_probs`` overrides both with
    exact (click, dismiss, no-click) probabilities.
    """

    click_bias: float = 0.0
    dismiss_bias: float = 0.0
    click_w: tuple[float, ...] | None = None
    dismiss_w: tuple[float, ...] | None = None
    const_probs: tuple[float, float, float] | None = None

    def probs(self, x: np.ndarray) -> tuple[float, float, float]:
        if self.const_probs is not None:
            pc, pd, pn = self.const_probs
            if abs(pc + pd + pn - 1.0) > 1e-9 or min(pc, pd, pn) < 0:
                raise ValueError("const_probs must be a probability vector")
            return (pc, pd, pn)
        zc = self.click_bias + (float(np.dot(self.click_w, x)) if self.click_w is not None else 0.0)
        zd = self.dismiss_bias + (
            float(np.dot(self.dismiss_w, x)) if self.dismiss_w is not None else 0.0
        )
        pc = float(_sigmoid(zc))
        pd = (1.0 - pc) * float(_sigmoid(zd))
        return (pc, pd, 1.0 - pc - pd)


@dataclass(frozen=True)
class BanditEnvSpec:
    """Per-action feedback distributions over a context distribution."""

    context_dim: int
    actions: dict[ActionType, ActionEnv] = field(default_factory=dict)

    def __post_init__(self) -> None:
        missing = [a for a in ActionType if a not in self.actions]
        if missing:
            raise ValueError(f"bandit env must define every action; missing {missing}")

    def sample_context(self, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal(self.context_dim)

    def expected_reward(self, x: np.ndarray, action: ActionType) -> float:
        pc, pd, _ = self.actions[action].probs(x)
        return pc - pd

    def best_action(self, x: np.ndarray) -> ActionType:
        return max(ActionType, key=lambda a: self.expected_reward(x, a))


def uniform_env(context_dim: int, probs: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)) -> BanditEnvSpec:
    """Every action has the same constant feedback distribution."""
    return BanditEnvSpec(context_dim, {a: ActionEnv(const_probs=probs) for a in ActionType})


def dominant_action_env(
    context_dim: int,
    dominant: ActionType = ActionType.PROMOTE_UPSELL,
    dominant_probs: tuple[float, float, float] = (1.0, 0.0, 0.0),
    other_probs: tuple[float, float, float] = (0.1, 0.6, 0.3),
) -> BanditEnvSpec:
    """One action strictly dominates regardless of context."""
    return BanditEnvSpec(
        context_dim,
        {a: ActionEnv(const_probs=dominant_probs if a is dominant else other_probs) for a in ActionType},
    )


@dataclass(frozen=True)
class GenConfig:
    """Everything the population generator needs, all seeded."""

    n_accounts: int
    n_reps: int
    seed: int
    account_dim: int = 8
    rep_dim: int = 4
    n_engagement_metrics: int = 2
    treatment_share: float = 0.5
    noise_sd: float = 1.0
    effect: EffectSpec = field(default_factory=EffectSpec)
    baseline: BaselineSpec = field(default_factory=BaselineSpec)
    confounding: float = 0.0
    engagement_drift: tuple[float, float] = (0.0, 0.0)
    engagement_noise_sd: tuple[float, float] = (1.0, 0.02)
    max_days_to_rtcd: int = 365

    def validated(self) -> "GenConfig":
        if not (0.0 < self.treatment_share < 1.0):
            raise ValueError("treatment_share must be in (0, 1)")
        if min(self.n_accounts, self.n_reps, self.account_dim, self.rep_dim) < 1:
            raise ValueError("population sizes and feature dims must be >= 1")
        if self.n_engagement_metrics < 1:
            raise ValueError("need at least one engagement metric")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")
        if max(self.effect.indices) >= self.account_dim:
            raise ValueError("effect indices exceed account_dim")
        if self.account_dim < 4:
            raise ValueError("account_dim must be >= 4 (engagement block uses the last 3)")
        return self

    @property
    def e_idx(self) -> tuple[int, ...]:
        return tuple(range(self.account_dim - 3, self.account_dim))

    @property
    def u_idx(self) -> tuple[int, ...]:
        return tuple(range(self.account_dim))


def _engagement_now(x: np.ndarray, cfg: GenConfig) -> tuple[float, float]:
    i0, i1, _ = cfg.e_idx
    pu = float(np.clip(50.0 + 12.0 * x[i0], 0.0, 100.0))
    pa = float(np.clip(0.5 + 0.12 * x[i1], 0.0, 1.0))
    return pu, pa


def generate_population(config: GenConfig) -> tuple[list[Account], list[Rep]]:
    """Generate the synthetic book of business; bit-identical per seed."""
    cfg = config.validated()
    rng = stream(cfg.seed, "population")
    X = rng.standard_normal((cfg.n_accounts, cfg.account_dim))
    days = rng.integers(0, cfg.max_days_to_rtcd + 1, cfg.n_accounts)
    tau = cfg.effect.tau(X)
    width = len(str(cfg.n_accounts))
    accounts = [
        Account(
            id=f"A{i:0{width}d}",
            x=X[i],
            u_idx=cfg.u_idx,
            e_idx=cfg.e_idx,
            d=int(days[i]),
            engagement_now=_engagement_now(X[i], cfg),
            true_ite=float(tau[i]),
        )
        for i in range(cfg.n_accounts)
    ]
    S = rng.standard_normal((cfg.n_reps, cfg.rep_dim))
    rwidth = len(str(cfg.n_reps))
    reps = [Rep(id=f"R{j:0{rwidth}d}", s=S[j]) for j in range(cfg.n_reps)]
    return accounts, reps


def assign_treatment(accounts: Sequence[Account], config: GenConfig) -> np.ndarray:
    """0/1 outreach assignment; confounded through x0 when configured."""
    cfg = config.validated()
    rng = stream(cfg.seed, "treatment")
    if cfg.confounding == 0.0:
        p = np.full(len(accounts), cfg.treatment_share)
    else:
        logit = math.log(cfg.treatment_share / (1.0 - cfg.treatment_share))
        x0 = np.array([a.x[0] for a in accounts])
        p = np.asarray(_sigmoid(logit + cfg.confounding * x0))
    return (rng.random(len(accounts)) < p).astype(np.int64)


def simulate_outcomes(
    accounts: Sequence[Account], treatment_assignment: np.ndarray, config: GenConfig
) -> np.ndarray:
    """y = baseline(x) + a * tau(x) + Gaussian noise."""
    cfg = config.validated()
    a = np.asarray(treatment_assignment)
    if a.shape[0] != len(accounts):
        raise ValueError("treatment assignment must cover every account")
    X = np.array([acc.x for acc in accounts])
    y = cfg.baseline.value(X) + a * cfg.effect.tau(X)
    if cfg.noise_sd > 0:
        y = y + stream(cfg.seed, "outcomes").normal(0.0, cfg.noise_sd, len(accounts))
    return y


def simulate_engagement_targets(
    accounts: Sequence[Account], config: GenConfig
) -> np.ndarray:
    """Next-period (pu, pa) per account; drift slopes are the oracle."""
    cfg = config.validated()
    rng = stream(cfg.seed, "engagement")
    _, _, i2 = cfg.e_idx
    out = np.zeros((len(accounts), 2))
    for i, acc in enumerate(accounts):
        pu_now, pa_now = acc.engagement_now
        mod = acc.x[i2]
        pu_next = pu_now + cfg.engagement_drift[0] + 2.0 * mod + rng.normal(0, cfg.engagement_noise_sd[0])
        pa_next = pa_now + cfg.engagement_drift[1] + 0.02 * mod + rng.normal(0, cfg.engagement_noise_sd[1])
        out[i, 0] = np.clip(pu_next, 0.0, 100.0)
        out[i, 1] = np.clip(pa_next, 0.0, 1.0)
    return out


def simulate_feedback(
    x_t: np.ndarray, action: ActionType, env: BanditEnvSpec, rng: np.random.Generator
) -> FeedbackKind:
    """Draw one feedback kind from the action's distribution at x_t."""
    pc, pd, _ = env.actions[action].probs(x_t)
    u = rng.random()
    if u < pc:
        return FeedbackKind.DEEP_LINK_CLICKED
    if u < pc + pd:
        return FeedbackKind.NOTIFICATION_DISMISSED
    return FeedbackKind.NO_CLICK


def feedback_event(
    rep_id: str,
    account_id: str,
    action: ActionType,
    x_t: np.ndarray,
    env: BanditEnvSpec,
    rng: np.random.Generator,
    t: int,
) -> FeedbackEvent:
    kind = simulate_feedback(x_t, action, env, rng)
    return FeedbackEvent.from_feedback(rep_id, account_id, action, kind, t)


@dataclass(frozen=True)
class PanelConfig:
    """Geometry and noise of the observational panel."""

    n_units_per_group: int = 50
    seed: int = 0
    noise_sd: float = 0.5
    unit_sd: float = 1.0
    group_offset: float = 2.0
    time_slope: float = 0.25
    covariate_dim: int = 3
    covariate_shift: float = 0.0


def generate_panel(config: PanelConfig, injected_effect: float) -> list[PanelObservation]:
    """Two groups x two periods under parallel trends with a known effect."""
    if not math.isfinite(injected_effect):
        raise ValueError("injected_effect must be finite")
    rows = generate_time_panel(config, injected_effect, n_pre=1, n_post=1)
    period_of = {0: Period.PRE, 1: Period.POST}
    return [
        PanelObservation(r.unit_id, r.group, period_of[r.t], r.outcome, r.covariates) for r in rows
    ]


def generate_time_panel(
    config: PanelConfig,
    injected_effect: float,
    n_pre: int = 4,
    n_post: int = 2,
    pre_trend_divergence: float = 0.0,
) -> list[PanelTimeObservation]:
    """Day-indexed panel; treatment turns on at t = n_pre.

    Under ``pre_trend_divergence = 0`` the two groups share the time trend
    exactly, so any placebo cut inside the pre-period has expected effect
    zero and the true post-period effect equals ``injected_effect``.
    """
    if not math.isfinite(injected_effect):
        raise ValueError("injected_effect must be finite")
    if n_pre < 1 or n_post < 1:
        raise ValueError("panel needs at least one pre and one post period")
    rng = stream(config.seed, "panel")
    rows: list[PanelTimeObservation] = []
    width = len(str(2 * config.n_units_per_group))
    uid = 0
    for group in (Group.TREAT, Group.CTRL):
        for _ in range(config.n_units_per_group):
            unit_id = f"U{uid:0{width}d}"
            uid += 1
            u = rng.normal(0.0, config.unit_sd)
            cov = rng.standard_normal(config.covariate_dim)
            if group is Group.TREAT and config.covariate_shift:
                cov = cov + config.covariate_shift
            base = u + (config.group_offset if group is Group.TREAT else 0.0)
            for t in range(n_pre + n_post):
                y = base + config.time_slope * t
                if group is Group.TREAT:
                    y += pre_trend_divergence * t
                    if t >= n_pre:
                        y += injected_effect
                if config.noise_sd > 0:
                    y += rng.normal(0.0, config.noise_sd)
                rows.append(PanelTimeObservation(unit_id, group, t, float(y), cov))
    return rows


@dataclass(frozen=True)
class RealizedOutcome:
    """Potential outcomes of one account; counterfactuals are observable
    here because the generator owns the structural model."""

    account_id: str
    outreached: bool
    upsell_if_outreached: bool
    churn_without_outreach: bool
    churn_with_outreach: bool

    @property
    def retained_via_outreach(self) -> bool:
        return self.churn_without_outreach and not self.churn_with_outreach


def closing_window(d: int, center: float = 90.0, width: float = 30.0) -> float:
    """How live an account's renewal decision is: ~1 near the close date,
    ~0 two quarters out. Deals close and churn materializes inside this
    window, which is what makes RTCD-aware prioritization pay off."""
    return float(_sigmoid(-(d - center) / width))


def realize_outcomes(
    accounts: Sequence[Account],
    outreached_ids: Iterable[str],
    config: GenConfig,
    oracle: bool = True,
) -> dict[str, RealizedOutcome]:
    """Closed-won / churn outcomes per account.

    Oracle mode is deterministic: positive-uplift accounts close upsells
    when outreached, negative-uplift accounts churn unless outreached.
    Noisy mode separates the channels: add-ons close when the account is
    live (renewal decision near, or usage visibly shifting as the team
    re-evaluates the product), while the outreach effect on monetization
    drives churn risk, materializing only near the renewal decision.
    Outreach retains at-risk accounts 70% of the time.
    """
    cfg = config.validated()
    outreached = set(outreached_ids)
    scale = max(cfg.effect.sd, 1e-9)
    vol_idx = cfg.e_idx[2]
    rng = stream(cfg.seed, "realized")
    out: dict[str, RealizedOutcome] = {}
    for acc in accounts:
        if acc.true_ite is None:
            raise ValueError(f"account {acc.id} has no ground-truth effect")
        tau = acc.true_ite
        if oracle:
            upsell = tau > 0
            churn_wo = tau < 0
            churn_w = False
        else:
            window = closing_window(acc.d)
            volatility = float(_sigmoid(2.5 * (abs(acc.x[vol_idx]) - 0.8)))
            upsell = rng.random() < 0.8 * max(0.6 * window, volatility)
            churn_wo = rng.random() < float(_sigmoid(-2.0 * tau / scale)) * window
            churn_w = churn_wo and rng.random() > 0.7
        out[acc.id] = RealizedOutcome(
            account_id=acc.id,
            outreached=acc.id in outreached,
            upsell_if_outreached=upsell,
            churn_without_outreach=churn_wo,
            churn_with_outreach=churn_w,
        )
    return out


def realized_bookings(
    accounts: Sequence[Account], outreached_ids: Iterable[str], config: GenConfig
) -> float:
    """Expected total bookings: baseline book plus uplift on outreached accounts."""
    cfg = config.validated()
    outreached = set(outreached_ids)
    X = np.array([a.x for a in accounts])
    total = float(np.sum(cfg.baseline.value(X)))
    total += sum(a.true_ite for a in accounts if a.id in outreached and a.true_ite is not None)
    return total


def with_seed(config: GenConfig, seed: int) -> GenConfig:
    return replace(config, seed=seed)
