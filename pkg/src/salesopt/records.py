"""Line-delimited record encoding.

One JSON object per line, UTF-8, self-describing ``kind`` field. Domain
types round-trip exactly (float64 survives json via repr). The same
encoding backs dataset files, model snapshots, and the service event log.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator

import numpy as np

from .domain import (
    Account,
    ActionType,
    AssignmentMatrix,
    BanditContext,
    FeedbackEvent,
    FeedbackKind,
    Group,
    PanelObservation,
    PanelTimeObservation,
    Period,
    Recommendation,
    Rep,
    ScoredAccount,
)


def _arr(v: np.ndarray) -> list[float]:
    return [float(x) for x in np.asarray(v).ravel()]


_ENCODERS: dict[type, tuple[str, Callable[[Any], dict]]] = {
    Account: (
        "account",
        lambda a: {
            "id": a.id,
            "x": _arr(a.x),
            "u_idx": list(a.u_idx),
            "e_idx": list(a.e_idx),
            "d": a.d,
            "engagement_now": list(a.engagement_now),
            "true_ite": a.true_ite,
        },
    ),
    Rep: ("rep", lambda r: {"id": r.id, "s": _arr(r.s)}),
    ScoredAccount: (
        "scored_account",
        lambda s: {
            "account_id": s.account_id,
            "d": s.d,
            "y_u_raw": s.y_u_raw,
            "delta_e": _arr(s.delta_e),
            "y_e_raw": s.y_e_raw,
            "y_u": s.y_u,
            "y_e": s.y_e,
        },
    ),
    AssignmentMatrix: (
        "assignment",
        lambda m: {
            "entries": [_arr(row) for row in m.entries],
            "account_index": list(m.account_index),
            "rep_index": list(m.rep_index),
        },
    ),
    Recommendation: (
        "recommendation",
        lambda r: {
            "account_id": r.account_id,
            "rep_id": r.rep_id,
            "action": r.action.value,
            "g_rank": r.g_rank,
            "r_rank": r.r_rank,
            "a_value": r.a_value,
            "explanation": r.explanation,
            "created_at": r.created_at,
        },
    ),
    FeedbackEvent: (
        "feedback",
        lambda f: {
            "rep_id": f.rep_id,
            "account_id": f.account_id,
            "action": f.action.value,
            "feedback": f.feedback.value,
            "reward": f.reward,
            "t": f.t,
        },
    ),
    BanditContext: (
        "bandit_context",
        lambda c: {"x_a": _arr(c.x_a), "x_s": _arr(c.x_s), "x_r": _arr(c.x_r)},
    ),
    PanelObservation: (
        "panel_obs",
        lambda p: {
            "unit_id": p.unit_id,
            "group": p.group.value,
            "period": p.period.value,
            "outcome": p.outcome,
            "covariates": _arr(p.covariates),
        },
    ),
    PanelTimeObservation: (
        "panel_time_obs",
        lambda p: {
            "unit_id": p.unit_id,
            "group": p.group.value,
            "t": p.t,
            "outcome": p.outcome,
            "covariates": _arr(p.covariates),
        },
    ),
}

_DECODERS: dict[str, Callable[[dict], Any]] = {
    "account": lambda d: Account(
        id=d["id"],
        x=np.array(d["x"]),
        u_idx=tuple(d["u_idx"]),
        e_idx=tuple(d["e_idx"]),
        d=d["d"],
        engagement_now=tuple(d["engagement_now"]),
        true_ite=d["true_ite"],
    ),
    "rep": lambda d: Rep(id=d["id"], s=np.array(d["s"])),
    "scored_account": lambda d: ScoredAccount(
        account_id=d["account_id"],
        d=d["d"],
        y_u_raw=d["y_u_raw"],
        delta_e=np.array(d["delta_e"]),
        y_e_raw=d["y_e_raw"],
        y_u=d["y_u"],
        y_e=d["y_e"],
    ),
    "assignment": lambda d: AssignmentMatrix(
        entries=np.array(d["entries"]).reshape(len(d["account_index"]), len(d["rep_index"])),
        account_index=tuple(d["account_index"]),
        rep_index=tuple(d["rep_index"]),
    ),
    "recommendation": lambda d: Recommendation(
        account_id=d["account_id"],
        rep_id=d["rep_id"],
        action=ActionType(d["action"]),
        g_rank=d["g_rank"],
        r_rank=d["r_rank"],
        a_value=d["a_value"],
        explanation=d["explanation"],
        created_at=d["created_at"],
    ),
    "feedback": lambda d: FeedbackEvent(
        rep_id=d["rep_id"],
        account_id=d["account_id"],
        action=ActionType(d["action"]),
        feedback=FeedbackKind(d["feedback"]),
        reward=d["reward"],
        t=d["t"],
    ),
    "bandit_context": lambda d: BanditContext(
        x_a=np.array(d["x_a"]), x_s=np.array(d["x_s"]), x_r=np.array(d["x_r"])
    ),
    "panel_obs": lambda d: PanelObservation(
        unit_id=d["unit_id"],
        group=Group(d["group"]),
        period=Period(d["period"]),
        outcome=d["outcome"],
        covariates=np.array(d["covariates"]),
    ),
    "panel_time_obs": lambda d: PanelTimeObservation(
        unit_id=d["unit_id"],
        group=Group(d["group"]),
        t=d["t"],
        outcome=d["outcome"],
        covariates=np.array(d["covariates"]),
    ),
}


def record_kind(entity: Any) -> str:
    try:
        return _ENCODERS[type(entity)][0]
    except KeyError:
        raise TypeError(f"no record encoding for {type(entity).__name__}") from None


def to_record(entity: Any) -> dict:
    """Encode a domain value as a {kind, payload} dict."""
    kind, enc = _ENCODERS[type(entity)]
    return {"kind": kind, "payload": enc(entity)}


def from_record(record: dict) -> Any:
    """Decode a {kind, payload} dict back into its domain value."""
    kind = record["kind"]
    dec = _DECODERS.get(kind)
    if dec is None:
        raise ValueError(f"unknown record kind: {kind!r}")
    return dec(record["payload"])


def dump_line(record: dict) -> str:
    return json.dumps(record, separators=(",", ":"), allow_nan=False)


def write_records(path: str | Path, entities: Iterable[Any]) -> int:
    """Write entities one record per line; returns the record count."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for e in entities:
            fh.write(dump_line(to_record(e)) + "\n")
            n += 1
    return n


def read_records(path: str | Path) -> Iterator[Any]:
    """Yield decoded domain values from a record file."""
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield from_record(json.loads(line))


def format_table(rows: list[dict], columns: list[str] | None = None) -> str:
    """Render rows as an aligned text table (header + one line per row)."""
    if not rows:
        return "(empty)"
    cols = columns or list(rows[0].keys())
    cells = [[_fmt_cell(r.get(c)) for c in cols] for r in rows]
    widths = [max(len(cols[i]), max(row[i].__len__() for row in cells)) for i in range(len(cols))]
    lines = ["  ".join(cols[i].ljust(widths[i]) for i in range(len(cols))).rstrip()]
    lines.append("  ".join("-" * widths[i] for i in range(len(cols))))
    for row in cells:
        lines.append("  ".join(row[i].ljust(widths[i]) for i in range(len(cols))).rstrip())
    return "\n".join(lines)


def _fmt_cell(v: Any) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.4g}"
    if hasattr(v, "value") and not isinstance(v, (int, float)):
        return str(v.value)
    return str(v)
