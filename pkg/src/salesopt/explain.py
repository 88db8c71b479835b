"""Serving-layer explanations.

Template rendering is byte-stable for golden-file tests. Narrative
generation goes through a pluggable text-generation client; the
deterministic mock renders from a structured block embedded in the
prompt, so the whole pipeline runs offline.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Mapping, Protocol, Sequence

import numpy as np

from .datagen import stream
from .domain import ActionType

logger = logging.getLogger(__name__)


class AlertKind(str, Enum):
    LOW_ENGAGEMENT = "LowEngagement"
    UPSELL_FLAG = "UpsellFlag"
    CHURN_FLAG = "ChurnFlag"


ALERT_FOR_ACTION: dict[ActionType, AlertKind] = {
    ActionType.BOOST_ENGAGEMENT: AlertKind.LOW_ENGAGEMENT,
    ActionType.PROMOTE_UPSELL: AlertKind.UPSELL_FLAG,
    ActionType.PREVENT_CHURN: AlertKind.CHURN_FLAG,
}

_TEMPLATES: dict[AlertKind, tuple[str, tuple[str, ...]]] = {
    AlertKind.LOW_ENGAGEMENT: (
        "RTCD = {d}. We recommend reaching out to the client to understand the low "
        "engagement in {product}. The current usage is {y} and we are predicting a drop "
        "to {dy} over the next month.",
        ("d", "product", "y", "dy"),
    ),
    AlertKind.UPSELL_FLAG: (
        "RTCD = {d}. We recommend exploring add-on opportunities with this customer as "
        "we predict a near-term upsell opportunity worth {dy}.",
        ("d", "dy"),
    ),
    AlertKind.CHURN_FLAG: (
        "RTCD = {d}. We recommend connecting with customers to assess churn risks.",
        ("d",),
    ),
}


class TemplateError(ValueError):
    pass


def _fmt_number(v: object) -> str:
    if isinstance(v, bool):
        return str(v)
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return str(int(v)) if v.is_integer() else f"{v:g}"
    return str(v)


def render_template(kind: AlertKind, slots: Mapping[str, object]) -> str:
    """Fill the alert template; missing slots are named in the error."""
    template, required = _TEMPLATES[kind]
    missing = [name for name in required if name not in slots]
    if missing:
        raise TemplateError(f"{kind.value} template missing slot(s): {', '.join(missing)}")
    return template.format(**{name: _fmt_number(slots[name]) for name in required})


@dataclass(frozen=True)
class FeatureMapping:
    """feature_name -> human-readable expression."""

    rows: tuple[tuple[str, str], ...]

    def __post_init__(self) -> None:
        names = [r[0] for r in self.rows]
        if len(set(names)) != len(names):
            raise ValueError("feature names in the mapping must be unique")

    def expression(self, feature_name: str) -> str:
        for name, expr in self.rows:
            if name == feature_name:
                return expr
        return feature_name


class ModelKind(str, Enum):
    TREATMENT_MODEL = "TreatmentModel"
    CONTROL_MODEL = "ControlModel"
    FORECASTER = "Forecaster"


_COMPARATORS: dict[str, Callable[[float, float], bool]] = {
    "<": lambda v, b: v < b,
    ">": lambda v, b: v > b,
    "<=": lambda v, b: v <= b,
    ">=": lambda v, b: v >= b,
}


@dataclass(frozen=True)
class ThresholdRule:
    feature_name: str
    model: ModelKind
    comparator: str
    bound: float

    def __post_init__(self) -> None:
        if self.comparator not in _COMPARATORS:
            raise ValueError(f"comparator must be one of {sorted(_COMPARATORS)}")

    def fires(self, value: float) -> bool:
        return _COMPARATORS[self.comparator](value, self.bound)


def validate_rules(rules: Sequence[ThresholdRule], known_features: Sequence[str]) -> None:
    """Load-time check: every rule must reference a known feature."""
    known = set(known_features)
    unknown = [r.feature_name for r in rules if r.feature_name not in known]
    if unknown:
        raise ValueError(f"threshold rules reference unknown feature(s): {sorted(set(unknown))}")


def apply_thresholds(
    rules: Sequence[ThresholdRule], outputs: Mapping[tuple[str, ModelKind], float]
) -> list[ThresholdRule]:
    """Exactly the rules whose comparison holds on the model outputs."""
    fired = []
    for rule in rules:
        key = (rule.feature_name, rule.model)
        if key not in outputs:
            raise KeyError(f"no model output for rule on {key}")
        if rule.fires(outputs[key]):
            fired.append(rule)
    return fired


def attach_fired_rules(
    explanation: str,
    fired: Sequence[ThresholdRule],
    outputs: Mapping[tuple[str, ModelKind], float],
    mapping: FeatureMapping | None = None,
) -> str:
    """Append fired threshold rules to a rendered alert as support bullets."""
    if not fired:
        return explanation
    lines = [explanation, "Supporting signals:"]
    for rule in fired:
        label = mapping.expression(rule.feature_name) if mapping else rule.feature_name
        value = outputs[(rule.feature_name, rule.model)]
        lines.append(
            f"- {label}: {rule.model.value} output {_fmt_number(round(value, 3))} "
            f"{rule.comparator} {_fmt_number(rule.bound)}"
        )
    return "\n".join(lines)


@dataclass(frozen=True)
class FeatureGroup:
    feature_name: str
    super_name: str
    ultra_name: str
    parsed: bool = True


_SUFFIX_RE = re.compile(r"^l(\d+)m$")
_CAMEL_RE = re.compile(r"(?<=[a-z0-9])(?=[A-Z])|(?<=[A-Z])(?=[A-Z][a-z])")


def _metric_meaning(tokens: Sequence[str]) -> str:
    return " ".join(_CAMEL_RE.sub(" ", t) for t in tokens)


def group_features(feature_names: Sequence[str]) -> list[FeatureGroup]:
    """Suffix-based semantic grouping.

    ``<metric>_l<n>m`` maps to "<metric meaning> in the last <n> month(s)";
    chained window suffixes resolve to the final one. Names without a
    window suffix pass through unparsed with ultra_name = full name.
    """
    out = []
    for name in feature_names:
        tokens = name.split("_")
        windows = []
        while tokens and (m := _SUFFIX_RE.match(tokens[-1])):
            windows.append(int(m.group(1)))
            tokens.pop()
        if not windows or not tokens:
            logger.info("feature name %r has no recognized window suffix", name)
            out.append(FeatureGroup(name, super_name=name, ultra_name=name, parsed=False))
            continue
        n = windows[0]  # suffixes chain left-to-right; the last one wins
        meaning = _metric_meaning(tokens)
        timeframe = "in the last month" if n == 1 else f"in the last {n} months"
        out.append(FeatureGroup(name, f"{meaning} {timeframe}", meaning))
    return out


@dataclass(frozen=True)
class ImportanceRecord:
    feature_name: str
    weight: float
    value: float
    account_id: str


@dataclass(frozen=True)
class ImportanceConfig:
    n_samples: int = 2000
    seed: int = 0
    kernel_width: float | None = None  # default 0.75 * sqrt(n_features)
    ridge: float = 1e-6


def instance_importance(
    predict_fn: Callable[[np.ndarray], np.ndarray],
    x: np.ndarray,
    feature_names: Sequence[str],
    account_id: str,
    feature_scale: np.ndarray | None = None,
    population_mean: np.ndarray | None = None,
    config: ImportanceConfig | None = None,
) -> list[ImportanceRecord]:
    """Local-surrogate importance around one instance.

    Gaussian perturbations scaled by the per-feature std, distance-kernel
    weights, weighted ridge surrogate; the reported weight is the
    surrogate coefficient times (x - population mean). Deterministic for
    a fixed config seed.
    """
    cfg = config or ImportanceConfig()
    x = np.asarray(x, dtype=float)
    p = x.shape[0]
    if len(feature_names) != p:
        raise ValueError("feature_names must align with x")
    scale = np.ones(p) if feature_scale is None else np.asarray(feature_scale, dtype=float)
    mean = np.zeros(p) if population_mean is None else np.asarray(population_mean, dtype=float)
    rng = stream(cfg.seed, "importance")
    Z = x + rng.standard_normal((cfg.n_samples, p)) * scale
    preds = np.asarray(predict_fn(Z), dtype=float).ravel()
    if preds.shape[0] != cfg.n_samples:
        raise ValueError("predict_fn must return one prediction per perturbed row")
    kw = cfg.kernel_width if cfg.kernel_width is not None else 0.75 * math.sqrt(p)
    dist2 = np.sum(((Z - x) / np.where(scale == 0, 1.0, scale)) ** 2, axis=1)
    w = np.exp(-dist2 / (2.0 * kw * kw))
    design = np.column_stack([np.ones(cfg.n_samples), Z])
    wd = design * w[:, None]
    gram = wd.T @ design
    gram[1:, 1:] += cfg.ridge * float(w.sum()) * np.eye(p)
    beta = np.linalg.solve(gram, wd.T @ preds)
    coefs = beta[1:]
    return [
        ImportanceRecord(
            feature_name=feature_names[j],
            weight=float(coefs[j] * (x[j] - mean[j])),
            value=float(x[j]),
            account_id=account_id,
        )
        for j in range(p)
    ]


class TextGenClient(Protocol):
    def generate(self, prompt: str) -> str: ...


_PROMPT_HEADER = (
    "You are writing account insights for a sales rep.\n"
    "Write one insight per category, ordered as given, combining related metrics.\n"
    "Sample format: '1. Metric C in the last 12 months increased from 18 to 24 (+33%).'\n"
    "DATA:\n"
)


class DeterministicMock:
    """Pure function of the prompt: parses the DATA block and renders the
    fixed sentence pattern, so tests never need a live endpoint."""

    def generate(self, prompt: str) -> str:
        payload = json.loads(prompt.split("DATA:\n", 1)[1])
        lines = [f"This account is likely a good candidate to {payload['action']}. "
                 "Its likelihood is driven by:"]
        for i, insight in enumerate(payload["insights"], start=1):
            lines.append(f"{i}. {self._sentence(insight)}")
        return "\n".join(lines)

    @staticmethod
    def _sentence(insight: dict) -> str:
        parts = []
        for m in insight["members"]:
            prev, curr = m["previous"], m["current"]
            if prev == curr:
                parts.append(f"{m['super_name']} held at {_fmt_number(curr)}")
                continue
            verb = "increased" if curr > prev else "decreased"
            if prev != 0:
                pct = round((curr - prev) / abs(prev) * 100)
                change = f" ({pct:+d}%)"
            else:
                change = ""
            parts.append(
                f"{m['super_name']} {verb} from {_fmt_number(prev)} to {_fmt_number(curr)}{change}"
            )
        sentence = "; ".join(parts) + "."
        if insight["low_confidence"]:
            sentence += " (low-confidence signal)"
        return sentence


class ExternalHttpClient:
    """Single request-response text generation over HTTP; never used in tests."""

    def __init__(self, endpoint: str, auth_token: str = "", timeout: float = 10.0):
        self.endpoint = endpoint
        self.auth_token = auth_token
        self.timeout = timeout

    def generate(self, prompt: str) -> str:
        import httpx

        headers = {"Authorization": f"Bearer {self.auth_token}"} if self.auth_token else {}
        response = httpx.post(
            self.endpoint, json={"prompt": prompt}, headers=headers, timeout=self.timeout
        )
        response.raise_for_status()
        return response.json()["text"]


@dataclass(frozen=True)
class Insight:
    ultra_name: str
    aggregate_weight: float
    members: tuple[str, ...]
    low_confidence: bool


@dataclass(frozen=True)
class NarrativeResult:
    text: str
    insights: tuple[Insight, ...]
    used_fallback: bool


def generate_narrative(
    importances: Sequence[ImportanceRecord],
    groups: Sequence[FeatureGroup],
    values: Mapping[str, tuple[float, float]],
    action: ActionType,
    client: TextGenClient | None = None,
) -> NarrativeResult:
    """Join importances with semantic groups and render ranked insights.

    One insight per distinct ultra_name, ordered by descending aggregate
    |weight| (ties by name); zero-weight categories are flagged
    low-confidence and land last. External client failures fall back to
    the deterministic mock, flagged in the result.
    """
    group_by_name = {g.feature_name: g for g in groups}
    buckets: dict[str, list[ImportanceRecord]] = {}
    for rec in importances:
        group = group_by_name.get(rec.feature_name)
        if group is None:
            logger.info("importance for %r has no semantic group; skipped", rec.feature_name)
            continue
        buckets.setdefault(group.ultra_name, []).append(rec)

    insights: list[Insight] = []
    payload_insights = []
    ordered = sorted(
        buckets.items(), key=lambda kv: (-sum(abs(r.weight) for r in kv[1]), kv[0])
    )
    for ultra, recs in ordered:
        total = sum(abs(r.weight) for r in recs)
        recs = sorted(recs, key=lambda r: (-abs(r.weight), r.feature_name))
        insights.append(
            Insight(
                ultra_name=ultra,
                aggregate_weight=total,
                members=tuple(r.feature_name for r in recs),
                low_confidence=total == 0.0,
            )
        )
        payload_insights.append(
            {
                "ultra_name": ultra,
                "aggregate_weight": total,
                "low_confidence": total == 0.0,
                "members": [
                    {
                        "feature_name": r.feature_name,
                        "super_name": group_by_name[r.feature_name].super_name,
                        "weight": r.weight,
                        "previous": values[r.feature_name][0],
                        "current": values[r.feature_name][1],
                    }
                    for r in recs
                    if r.feature_name in values
                ],
            }
        )

    prompt = _PROMPT_HEADER + json.dumps(
        {"action": action.value, "insights": payload_insights}, sort_keys=True
    )
    used_fallback = False
    mock = DeterministicMock()
    if client is None:
        text = mock.generate(prompt)
    else:
        try:
            text = client.generate(prompt)
        except Exception as exc:  # external clients can fail arbitrarily
            logger.warning("text generation client failed (%s); using mock", exc)
            text = mock.generate(prompt)
            used_fallback = True
    return NarrativeResult(text=text, insights=tuple(insights), used_fallback=used_fallback)
