"""Neural contextual bandit over the three sales actions.

A one-hidden-layer ReLU network predicts reward from [context, action
one-hot]. Uncertainty comes from sigma = sqrt(g' H^-1 g) where H
accumulates gradient outer products on top of lam * I; the solve goes
through a cached Cholesky factor, never an explicit inverse. Thompson
Sampling perturbs predictions with N(0, beta^2 sigma^2); UCB adds
gamma * sigma.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .datagen import BanditEnvSpec, stream
from .domain import ActionType, FeedbackKind, REWARD_BY_FEEDBACK

logger = logging.getLogger(__name__)

ACTIONS: tuple[ActionType, ...] = tuple(ActionType)
N_ACTIONS = len(ACTIONS)


def reward_from_feedback(feedback: FeedbackKind) -> int:
    """+1 for a deep-link click, -1 for a dismissal, 0 for no click."""
    return REWARD_BY_FEEDBACK[feedback]


def action_onehot(action: ActionType) -> np.ndarray:
    out = np.zeros(N_ACTIONS)
    out[ACTIONS.index(action)] = 1.0
    return out


@dataclass(frozen=True)
class BanditPolicyParams:
    mode: str = "thompson"  # "thompson" | "ucb"
    beta: float = 1.0
    gamma: float = 1.0
    learning_rate: float = 0.02
    sgd_steps: int = 1
    gradient_target: str = "parameters"  # "parameters" | "inputs"
    hidden: int = 32
    lam: float = 1.0
    max_step_norm: float = 10.0  # SGD steps are norm-clipped for stability

    def __post_init__(self) -> None:
        if self.mode not in ("thompson", "ucb"):
            raise ValueError("mode must be 'thompson' or 'ucb'")
        if self.gradient_target not in ("parameters", "inputs"):
            raise ValueError("gradient_target must be 'parameters' or 'inputs'")
        if min(self.beta, self.gamma) < 0 or self.learning_rate <= 0 or self.lam <= 0:
            raise ValueError("beta/gamma must be >= 0, learning_rate and lam > 0")
        if self.max_step_norm <= 0:
            raise ValueError("max_step_norm must be > 0")


class RewardNet:
    """One hidden ReLU layer, scalar output, explicit gradients."""

    def __init__(self, input_dim: int, hidden: int, seed: int):
        rng = stream(seed, "bandit-init")
        self.input_dim = input_dim
        self.hidden = hidden
        self.W1 = rng.normal(0.0, np.sqrt(2.0 / input_dim), (hidden, input_dim))
        self.b1 = np.zeros(hidden)
        self.w2 = rng.normal(0.0, np.sqrt(1.0 / hidden), hidden)
        self.b2 = 0.0

    @property
    def n_params(self) -> int:
        return (self.input_dim + 1) * self.hidden + self.hidden + 1

    def forward(self, z: np.ndarray) -> float:
        h = np.maximum(self.W1 @ z + self.b1, 0.0)
        return float(self.w2 @ h + self.b2)

    def grad_params(self, z: np.ndarray) -> np.ndarray:
        """d output / d theta, flattened as [W1, b1, w2, b2]."""
        pre = self.W1 @ z + self.b1
        mask = (pre > 0).astype(float)
        h = pre * mask
        db1 = self.w2 * mask
        dW1 = np.outer(db1, z)
        return np.concatenate([dW1.ravel(), db1, h, [1.0]])

    def grad_inputs(self, z: np.ndarray) -> np.ndarray:
        pre = self.W1 @ z + self.b1
        mask = (pre > 0).astype(float)
        return self.W1.T @ (self.w2 * mask)

    def param_vector(self) -> np.ndarray:
        return np.concatenate([self.W1.ravel(), self.b1, self.w2, [self.b2]])

    def set_params(self, theta: np.ndarray) -> None:
        hw = self.hidden * self.input_dim
        self.W1 = theta[:hw].reshape(self.hidden, self.input_dim).copy()
        self.b1 = theta[hw : hw + self.hidden].copy()
        self.w2 = theta[hw + self.hidden : hw + 2 * self.hidden].copy()
        self.b2 = float(theta[-1])

    def clone(self) -> "RewardNet":
        out = RewardNet.__new__(RewardNet)
        out.input_dim = self.input_dim
        out.hidden = self.hidden
        out.W1 = self.W1.copy()
        out.b1 = self.b1.copy()
        out.w2 = self.w2.copy()
        out.b2 = self.b2
        return out


class UncertaintyState:
    """H = lam * I + sum of gradient outer products, with a lazy Cholesky."""

    def __init__(self, dim: int, lam: float):
        if lam <= 0:
            raise ValueError("lam must be > 0")
        self.lam = lam
        self.H = lam * np.eye(dim)
        self._chol: np.ndarray | None = None

    def rank_one_update(self, g: np.ndarray) -> None:
        self.H += np.outer(g, g)
        self._chol = None

    def _factor(self) -> np.ndarray:
        if self._chol is None:
            self._chol = np.linalg.cholesky(self.H)
        return self._chol

    def sigma(self, g: np.ndarray) -> float:
        """sqrt(g' H^-1 g) via two triangular solves on the Cholesky factor."""
        if not np.any(g):
            return 0.0
        u = solve_triangular(self._factor(), g, lower=True, check_finite=False)
        return float(np.linalg.norm(u))

    def clone(self) -> "UncertaintyState":
        out = UncertaintyState.__new__(UncertaintyState)
        out.lam = self.lam
        out.H = self.H.copy()
        out._chol = None
        return out


def exploration_scores(
    y_hat: np.ndarray, sigmas: np.ndarray, params: BanditPolicyParams, rng: np.random.Generator
) -> np.ndarray:
    """Per-action scores: TS samples delta ~ N(0, beta^2 sigma^2), UCB adds gamma*sigma."""
    if params.mode == "thompson":
        noise = rng.standard_normal(len(y_hat)) * (params.beta * sigmas)
        return y_hat + noise
    return y_hat + params.gamma * sigmas


class BanditPolicy:
    """Single shared network and uncertainty state over all reps.

    Mutation happens only through ``update``; callers needing a stable
    view for concurrent reads take ``clone()`` snapshots.
    """

    def __init__(self, context_dim: int, params: BanditPolicyParams, seed: int):
        self.context_dim = context_dim
        self.params = params
        self.seed = seed
        self.net = RewardNet(context_dim + N_ACTIONS, params.hidden, seed)
        dim = self.net.n_params if params.gradient_target == "parameters" else self.net.input_dim
        self.state = UncertaintyState(dim, params.lam)
        self.lr_scale = 1.0
        self.n_updates = 0

    def _input(self, x_t: np.ndarray, action: ActionType) -> np.ndarray:
        x_t = np.asarray(x_t, dtype=float)
        if x_t.shape[0] != self.context_dim:
            raise ValueError(f"context has dim {x_t.shape[0]}, policy expects {self.context_dim}")
        return np.concatenate([x_t, action_onehot(action)])

    def _gradient(self, z: np.ndarray) -> np.ndarray:
        if self.params.gradient_target == "parameters":
            return self.net.grad_params(z)
        return self.net.grad_inputs(z)

    def predict(self, x_t: np.ndarray, action: ActionType) -> tuple[float, float]:
        """(expected reward, uncertainty) for one action."""
        z = self._input(x_t, action)
        return self.net.forward(z), self.state.sigma(self._gradient(z))

    def predict_all(self, x_t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        y = np.empty(N_ACTIONS)
        s = np.empty(N_ACTIONS)
        for i, a in enumerate(ACTIONS):
            y[i], s[i] = self.predict(x_t, a)
        return y, s

    def select_action(self, x_t: np.ndarray, rng: np.random.Generator) -> ActionType:
        """Argmax of exploration-adjusted scores; ties go to enum order."""
        y, s = self.predict_all(x_t)
        scores = exploration_scores(y, s, self.params, rng)
        return ACTIONS[int(np.argmax(scores))]

    def greedy_action(self, x_t: np.ndarray) -> ActionType:
        y, _ = self.predict_all(x_t)
        return ACTIONS[int(np.argmax(y))]

    def update(self, x_t: np.ndarray, action: ActionType, reward: float) -> None:
        """Norm-clipped SGD on squared error, then H += g g' at the stepped
        parameters. A step that would leave the parameters non-finite is
        rejected and the learning rate halved."""
        z = self._input(x_t, action)
        for _ in range(self.params.sgd_steps):
            y = self.net.forward(z)
            g = self.net.grad_params(z)
            with np.errstate(invalid="ignore", over="ignore"):
                step = 2.0 * (y - reward) * g
                norm = float(np.linalg.norm(step))
                if np.isfinite(norm) and norm > self.params.max_step_norm:
                    step = step * (self.params.max_step_norm / norm)
                theta = self.net.param_vector() - self.params.learning_rate * self.lr_scale * step
            if not np.all(np.isfinite(theta)):
                self.lr_scale *= 0.5
                logger.warning("non-finite SGD step rejected; halving learning rate to %g",
                               self.params.learning_rate * self.lr_scale)
                continue
            self.net.set_params(theta)
        self.state.rank_one_update(self._gradient(z))
        self.n_updates += 1

    def clone(self) -> "BanditPolicy":
        out = BanditPolicy.__new__(BanditPolicy)
        out.context_dim = self.context_dim
        out.params = self.params
        out.seed = self.seed
        out.net = self.net.clone()
        out.state = self.state.clone()
        out.lr_scale = self.lr_scale
        out.n_updates = self.n_updates
        return out


@dataclass
class SimulationTrace:
    """Per-round record of a bandit run, enough to redraw the feedback
    distribution and trend analyses."""

    actions: list[ActionType] = field(default_factory=list)
    feedback: list[FeedbackKind] = field(default_factory=list)
    rewards: list[int] = field(default_factory=list)
    cumulative: list[int] = field(default_factory=list)
    greedy_match: list[bool] = field(default_factory=list)
    expected_reward: list[float] = field(default_factory=list)

    def selection_shares(self, start: int = 0, end: int | None = None) -> dict[ActionType, float]:
        window = self.actions[start:end]
        total = max(len(window), 1)
        return {a: window.count(a) / total for a in ACTIONS}

    def feedback_distribution(self) -> dict[FeedbackKind, int]:
        return {k: self.feedback.count(k) for k in FeedbackKind}

    def greedy_fraction(self, start: int, end: int) -> float:
        window = self.greedy_match[start:end]
        return sum(window) / max(len(window), 1)

    def to_rows(self) -> list[dict]:
        return [
            {
                "round": t,
                "action": self.actions[t].value,
                "feedback": self.feedback[t].value,
                "reward": self.rewards[t],
                "cumulative_reward": self.cumulative[t],
                "greedy_match": self.greedy_match[t],
            }
            for t in range(len(self.actions))
        ]


def run_simulation(
    env: BanditEnvSpec, params: BanditPolicyParams, rounds: int, seed: int
) -> SimulationTrace:
    """Play the policy against a synthetic environment; fully seeded."""
    policy = BanditPolicy(env.context_dim, params, seed)
    ctx_rng = stream(seed, "sim-context")
    fb_rng = stream(seed, "sim-feedback")
    ts_rng = stream(seed, "sim-select")
    trace = SimulationTrace()
    total = 0
    for _ in range(rounds):
        x = env.sample_context(ctx_rng)
        action = policy.select_action(x, ts_rng)
        greedy = policy.greedy_action(x)
        pc, pd, _ = env.actions[action].probs(x)
        u = fb_rng.random()
        if u < pc:
            kind = FeedbackKind.DEEP_LINK_CLICKED
        elif u < pc + pd:
            kind = FeedbackKind.NOTIFICATION_DISMISSED
        else:
            kind = FeedbackKind.NO_CLICK
        reward = reward_from_feedback(kind)
        policy.update(x, action, reward)
        total += reward
        trace.actions.append(action)
        trace.feedback.append(kind)
        trace.rewards.append(reward)
        trace.cumulative.append(total)
        trace.greedy_match.append(action is greedy)
        trace.expected_reward.append(env.expected_reward(x, action))
    return trace
