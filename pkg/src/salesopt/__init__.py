"""Causal sales-recommendation engine on synthetic populations.

Layers: uplift prediction (S/T/X/DR meta-learners) and engagement
forecasts; LP-based account-rep matching with eligibility and cooldown
rules; a neural contextual bandit for final action selection; template
and narrative explanations; and DiD/CEM observational evaluation.
Exposed as a library, CLI (``salesopt``), and FastAPI service.
"""

from .bandit import BanditPolicy, BanditPolicyParams, run_simulation
from .datagen import BanditEnvSpec, EffectSpec, GenConfig, PanelConfig, generate_population
from .domain import (
    Account,
    ActionType,
    AssignmentMatrix,
    BanditContext,
    FeedbackEvent,
    FeedbackKind,
    PanelObservation,
    Recommendation,
    Rep,
    ScoredAccount,
    validate,
)
from .engine import Engine, EngineConfig
from .evalharness import AblationVariant, cem_match, did_estimate, net_ratio, run_ablation
from .forecast import Forecaster, fit_forecaster
from .optimizer import OptimizerParams, build_lp, match_and_rank, recommend_action, solve_lp, weight
from .uplift import fit_dr_learner, fit_s_learner, fit_t_learner, fit_x_learner, uplift_deciles

__version__ = "0.1.0"

__all__ = [
    "Account",
    "ActionType",
    "AssignmentMatrix",
    "AblationVariant",
    "BanditContext",
    "BanditEnvSpec",
    "BanditPolicy",
    "BanditPolicyParams",
    "EffectSpec",
    "Engine",
    "EngineConfig",
    "FeedbackEvent",
    "FeedbackKind",
    "Forecaster",
    "GenConfig",
    "OptimizerParams",
    "PanelConfig",
    "PanelObservation",
    "Recommendation",
    "Rep",
    "ScoredAccount",
    "build_lp",
    "cem_match",
    "did_estimate",
    "fit_dr_learner",
    "fit_forecaster",
    "fit_s_learner",
    "fit_t_learner",
    "fit_x_learner",
    "generate_population",
    "match_and_rank",
    "net_ratio",
    "recommend_action",
    "run_ablation",
    "run_simulation",
    "solve_lp",
    "uplift_deciles",
    "validate",
    "weight",
]
