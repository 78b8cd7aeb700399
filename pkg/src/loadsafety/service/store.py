"""Event-sourced review queue.

All state lives in one append-only JSON-lines event log (SUBMITTED,
CLAIMED, DECIDED) plus an image blob directory; the in-memory view is
rebuilt by replay on start.  Mutations serialize through a single lock so
sequence numbers stay dense and no queue item is ever handed to two
active leases.  The wall clock is injectable for lease tests.
"""

from __future__ import annotations

import json
import shutil
import threading
import time
from dataclasses import dataclass, asdict
from datetime import datetime, timezone
from pathlib import Path

from ..dataset import ClassLabel, DatasetManifest, SampleRecord, save_manifest

STATUS_REJECTED = "REJECTED_UNUSABLE"
STATUS_PENDING = "PENDING_REVIEW"
STATUS_DECIDED = "DECIDED"

FINAL_LABELS = ("SAFE", "UNSAFE", "UNUSABLE")

DEFAULT_LEASE_SECONDS = 300.0


class StoreError(Exception):
    pass


class UnknownSubmissionError(StoreError):
    pass


class ClaimError(StoreError):
    pass


class ConflictError(StoreError):
    pass


class StateError(StoreError):
    pass


@dataclass
class Submission:
    id: str
    image_path: str  # relative to the data directory
    received_at: str  # ISO-8601 UTC
    stage1_verdict: str  # USABLE | UNUSABLE
    stage1_confidence: float
    stage2_suggestion: str | None
    stage2_confidence: float | None
    status: str


@dataclass
class ReviewDecision:
    submission_id: str
    operator_id: str
    final_label: str
    decided_at: str


def _iso(ts: float) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).isoformat()


class ReviewStore:
    def __init__(self, data_dir, lease_seconds: float = DEFAULT_LEASE_SECONDS,
                 clock=time.time):
        self.data_dir = Path(data_dir)
        self.images_dir = self.data_dir / "images"
        self.images_dir.mkdir(parents=True, exist_ok=True)
        self.log_path = self.data_dir / "events.jsonl"
        self.lease_seconds = lease_seconds
        self.clock = clock
        self._lock = threading.Lock()
        self._seq = 0
        self._submissions: dict[str, Submission] = {}
        self._decisions: dict[str, ReviewDecision] = {}
        self._claims: dict[str, tuple[str, float]] = {}  # id -> (operator, claimed_at)
        self._replay()

    # ------------------------------------------------------------- events

    def _replay(self):
        if not self.log_path.exists():
            return
        with open(self.log_path) as fh:
            for line in fh:
                if not line.strip():
                    continue
                event = json.loads(line)
                expected = self._seq + 1
                if event["seq"] != expected:
                    raise StoreError(
                        f"event log gap: expected seq {expected}, found {event['seq']}"
                    )
                self._apply(event)

    def _apply(self, event):
        self._seq = event["seq"]
        kind = event["kind"]
        payload = event["payload"]
        if kind == "SUBMITTED":
            sub = Submission(**payload)
            self._submissions[sub.id] = sub
        elif kind == "CLAIMED":
            self._claims[payload["submission_id"]] = (
                payload["operator_id"], payload["claimed_at_ts"])
        elif kind == "DECIDED":
            decision = ReviewDecision(
                payload["submission_id"], payload["operator_id"],
                payload["final_label"], payload["decided_at"])
            self._decisions[decision.submission_id] = decision
            self._submissions[decision.submission_id].status = STATUS_DECIDED
            self._claims.pop(decision.submission_id, None)
        else:
            raise StoreError(f"unknown event kind {kind!r} in log")

    def _append(self, kind, payload):
        event = {"seq": self._seq + 1, "kind": kind, "payload": payload}
        with open(self.log_path, "a") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")
            fh.flush()
        self._apply(event)

    # ---------------------------------------------------------- mutations

    def submit(self, image_bytes: bytes, stage1_verdict: str,
               stage1_confidence: float, stage2_suggestion=None,
               stage2_confidence=None) -> Submission:
        with self._lock:
            sub_id = f"sub-{len(self._submissions) + 1:06d}"
            rel_path = f"images/{sub_id}.ppm"
            (self.data_dir / rel_path).write_bytes(image_bytes)
            status = (STATUS_REJECTED if stage1_verdict == "UNUSABLE"
                      else STATUS_PENDING)
            sub = Submission(
                id=sub_id,
                image_path=rel_path,
                received_at=_iso(self.clock()),
                stage1_verdict=stage1_verdict,
                stage1_confidence=stage1_confidence,
                stage2_suggestion=stage2_suggestion,
                stage2_confidence=stage2_confidence,
                status=status,
            )
            self._append("SUBMITTED", asdict(sub))
            return self.get(sub.id)

    def claim_next(self, operator_id: str) -> Submission | None:
        """Oldest unclaimed PENDING_REVIEW item, atomically leased."""
        with self._lock:
            now = self.clock()
            for sub in self._pending_in_order():
                holder = self._claims.get(sub.id)
                if holder is not None and now < holder[1] + self.lease_seconds:
                    continue  # active lease elsewhere
                self._append("CLAIMED", {
                    "submission_id": sub.id,
                    "operator_id": operator_id,
                    "claimed_at_ts": now,
                })
                return self.get(sub.id)
            return None

    def post_decision(self, submission_id: str, operator_id: str,
                      final_label: str) -> Submission:
        if final_label not in FINAL_LABELS:
            raise StateError(f"final label must be one of {FINAL_LABELS}, "
                             f"got {final_label!r}")
        with self._lock:
            sub = self._submissions.get(submission_id)
            if sub is None:
                raise UnknownSubmissionError(f"no submission {submission_id!r}")
            if sub.status == STATUS_REJECTED:
                raise StateError(
                    f"{submission_id} was rejected as unusable at intake and "
                    f"was never queued for review")
            if sub.status == STATUS_DECIDED:
                prior = self._decisions[submission_id]
                if (prior.operator_id == operator_id
                        and prior.final_label == final_label):
                    return self.get(submission_id)  # idempotent retry
                raise ConflictError(
                    f"{submission_id} already decided {prior.final_label} "
                    f"by {prior.operator_id}")
            holder = self._claims.get(submission_id)
            now = self.clock()
            if holder is None or now >= holder[1] + self.lease_seconds:
                raise ClaimError(f"{submission_id} is not claimed; claim it first")
            if holder[0] != operator_id:
                raise ClaimError(
                    f"{submission_id} is claimed by {holder[0]}, not {operator_id}")
            self._append("DECIDED", {
                "submission_id": submission_id,
                "operator_id": operator_id,
                "final_label": final_label,
                "decided_at": _iso(now),
            })
            return self.get(submission_id)

    # -------------------------------------------------------------- reads

    def get(self, submission_id: str) -> Submission:
        sub = self._submissions.get(submission_id)
        if sub is None:
            raise UnknownSubmissionError(f"no submission {submission_id!r}")
        return Submission(**asdict(sub))

    def get_decision(self, submission_id: str) -> ReviewDecision | None:
        decision = self._decisions.get(submission_id)
        return None if decision is None else ReviewDecision(**asdict(decision))

    def image_path(self, submission_id: str) -> Path:
        return self.data_dir / self.get(submission_id).image_path

    def lease_expires_at(self, submission_id: str) -> float | None:
        """Expiry of the current claim as a unix timestamp, if one exists."""
        holder = self._claims.get(submission_id)
        return None if holder is None else holder[1] + self.lease_seconds

    def _pending_in_order(self):
        pending = [s for s in self._submissions.values() if s.status == STATUS_PENDING]
        return sorted(pending, key=lambda s: (s.received_at, s.id))

    def list_queue(self, status: str | None = None, limit: int | None = None):
        subs = list(self._submissions.values())
        if status is not None:
            subs = [s for s in subs if s.status == status]
        subs.sort(key=lambda s: (s.received_at, s.id))
        if limit is not None:
            subs = subs[:max(0, limit)]
        return [Submission(**asdict(s)) for s in subs]

    def metrics(self) -> dict:
        counts = {STATUS_REJECTED: 0, STATUS_PENDING: 0, STATUS_DECIDED: 0}
        for sub in self._submissions.values():
            counts[sub.status] += 1
        total = len(self._submissions)
        rate = counts[STATUS_REJECTED] / total if total else 0.0
        return {
            "counts": counts,
            "total_submissions": total,
            "stage1_rejection_rate": rate,
        }

    def event_count(self) -> int:
        return self._seq

    # ------------------------------------------------------------- export

    def export_labels(self, destination) -> DatasetManifest:
        """Write decided submissions (operator labels, not AI suggestions)
        as a loadable manifest + image copies under destination."""
        with self._lock:
            decided = [s for s in self._submissions.values()
                       if s.status == STATUS_DECIDED]
            if not decided:
                raise StateError("nothing to export: no decided submissions")
            decided.sort(key=lambda s: (s.received_at, s.id))
            destination = Path(destination)
            (destination / "images").mkdir(parents=True, exist_ok=True)
            records = []
            for sub in decided:
                decision = self._decisions[sub.id]
                rel = f"images/{sub.id}.ppm"
                shutil.copyfile(self.data_dir / sub.image_path, destination / rel)
                records.append(SampleRecord(
                    sub.id, rel, ClassLabel(decision.final_label), "reviewed"))
            manifest = DatasetManifest(destination, records)
            save_manifest(manifest, destination / "manifest.jsonl")
            return manifest
