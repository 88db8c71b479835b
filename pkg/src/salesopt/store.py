"""Append-only event log with run-commit markers.

One JSON record per line: {seq, kind, day, payload}. The log is the
source of truth: live state is always reproducible by folding over it,
and a pipeline run's records only become visible once its run_committed
marker lands, so a killed run leaves nothing behind.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Iterator

KIND_RUN_STARTED = "run_started"
KIND_RUN_COMMITTED = "run_committed"
KIND_RECOMMENDATION = "recommendation"
KIND_FEEDBACK = "feedback"
KIND_MANIFEST = "manifest"


class LogError(RuntimeError):
    pass


class EventLog:
    """Sequential, append-only record store; file-backed or in-memory."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._records: list[dict] = []
        if self.path is not None and self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        self._records.append(json.loads(line))
            self._check_monotone()

    def _check_monotone(self) -> None:
        for i, rec in enumerate(self._records):
            if rec["seq"] != i:
                raise LogError(f"log corrupt: record {i} has seq {rec['seq']}")

    def __len__(self) -> int:
        return len(self._records)

    def append(self, kind: str, day: int, payload: dict) -> int:
        seq = len(self._records)
        record = {"seq": seq, "kind": kind, "day": day, "payload": payload}
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, separators=(",", ":"), allow_nan=False) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
        self._records.append(record)
        return seq

    def records(self, kind: str | None = None) -> Iterator[dict]:
        for rec in self._records:
            if kind is None or rec["kind"] == kind:
                yield rec

    def committed_days(self) -> list[int]:
        return sorted(r["day"] for r in self._records if r["kind"] == KIND_RUN_COMMITTED)

    def committed_records(self, kind: str | None = None) -> Iterator[dict]:
        """Records belonging to committed runs, plus all non-run records.

        Recommendations between a run_started and its run_committed marker
        count only if the marker exists; everything outside runs (feedback,
        manifests) is visible immediately.
        """
        committed = set(self.committed_days())
        for rec in self._records:
            if rec["kind"] in (KIND_RECOMMENDATION, KIND_RUN_STARTED, KIND_RUN_COMMITTED):
                if rec["day"] not in committed:
                    continue
            if kind is None or rec["kind"] == kind:
                yield rec
