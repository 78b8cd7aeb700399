"""HTTP+JSON API over the review store and the two-stage classifier.

Intake runs stage 1 synchronously: unusable photos are rejected on the
spot (the submitter is told to retake), usable ones enter the review
queue with any confident stage-2 suggestion attached.  Operators identify
themselves with the X-Operator-Id header; there is no authentication
beyond that.
"""

from __future__ import annotations

import time
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, File, Header, HTTPException, Response, UploadFile
from pydantic import BaseModel

from ..imaging import ImageFormatError, decode_ppm
from ..pipeline import Outcome, TwoStageClassifier, load_checkpoint
from ..pipeline.classify import DEFAULT_REVIEW_THRESHOLD
from .store import (
    ClaimError,
    ConflictError,
    ReviewStore,
    StateError,
    UnknownSubmissionError,
    DEFAULT_LEASE_SECONDS,
    _iso,
)


class ServiceConfig:
    def __init__(self, data_dir, stage1_checkpoint, stage2_checkpoint=None,
                 review_threshold=DEFAULT_REVIEW_THRESHOLD,
                 lease_seconds=DEFAULT_LEASE_SECONDS, clock=None):
        self.data_dir = data_dir
        self.stage1_checkpoint = stage1_checkpoint
        self.stage2_checkpoint = stage2_checkpoint
        self.review_threshold = review_threshold
        self.lease_seconds = lease_seconds
        self.clock = clock or time.time


class SubmissionModel(BaseModel):
    id: str
    image_path: str
    received_at: str
    stage1_verdict: str
    stage1_confidence: float
    stage2_suggestion: Optional[str] = None
    stage2_confidence: Optional[float] = None
    status: str


class ClaimResponse(BaseModel):
    submission: Optional[SubmissionModel] = None
    lease_expires_at: Optional[str] = None  # ISO-8601, for countdown display


class DecisionRequest(BaseModel):
    label: str


class ExportRequest(BaseModel):
    destination: str


class MetricsModel(BaseModel):
    counts: dict
    total_submissions: int
    stage1_rejection_rate: float
    pending_review: int


def create_app(config: ServiceConfig) -> FastAPI:
    # a broken stage-1 model must stop the service here, not per-request
    stage1 = load_checkpoint(config.stage1_checkpoint)
    stage2 = (load_checkpoint(config.stage2_checkpoint)
              if config.stage2_checkpoint else None)
    classifier = TwoStageClassifier(stage1, stage2,
                                    review_threshold=config.review_threshold)
    store = ReviewStore(config.data_dir, lease_seconds=config.lease_seconds,
                        clock=config.clock)

    app = FastAPI(title="load-safety review service")
    app.state.store = store
    app.state.classifier = classifier

    def require_operator(operator_id: Optional[str]) -> str:
        if not operator_id:
            raise HTTPException(400, "X-Operator-Id header is required")
        return operator_id

    @app.post("/submissions", response_model=SubmissionModel, status_code=201)
    async def submit(image: UploadFile = File(...)):
        blob = await image.read()
        try:
            decoded = decode_ppm(blob)
        except ImageFormatError as exc:
            raise HTTPException(400, f"unsupported image: {exc}")
        verdict = classifier.classify(decoded)
        if verdict.outcome is Outcome.UNUSABLE:
            sub = store.submit(blob, "UNUSABLE", verdict.stage1_confidence)
        else:
            suggestion = None
            confidence = None
            if verdict.outcome in (Outcome.SAFE, Outcome.UNSAFE):
                suggestion = verdict.outcome.value
                confidence = verdict.stage2_confidence
            sub = store.submit(blob, "USABLE", verdict.stage1_confidence,
                               stage2_suggestion=suggestion,
                               stage2_confidence=confidence)
        return SubmissionModel(**sub.__dict__)

    @app.get("/queue", response_model=list[SubmissionModel])
    def queue(status: Optional[str] = None, limit: Optional[int] = None):
        return [SubmissionModel(**s.__dict__)
                for s in store.list_queue(status=status, limit=limit)]

    @app.post("/queue/claim", response_model=ClaimResponse)
    def claim(x_operator_id: Optional[str] = Header(default=None)):
        operator = require_operator(x_operator_id)
        sub = store.claim_next(operator)
        if sub is None:
            return ClaimResponse(submission=None)
        expires = store.lease_expires_at(sub.id)
        return ClaimResponse(submission=SubmissionModel(**sub.__dict__),
                             lease_expires_at=_iso(expires))

    @app.post("/submissions/{submission_id}/decision", response_model=SubmissionModel)
    def decide(submission_id: str, body: DecisionRequest,
               x_operator_id: Optional[str] = Header(default=None)):
        operator = require_operator(x_operator_id)
        try:
            sub = store.post_decision(submission_id, operator, body.label)
        except UnknownSubmissionError as exc:
            raise HTTPException(404, str(exc))
        except (ClaimError, ConflictError) as exc:
            raise HTTPException(409, str(exc))
        except StateError as exc:
            raise HTTPException(400, str(exc))
        return SubmissionModel(**sub.__dict__)

    @app.get("/submissions/{submission_id}/image")
    def image_bytes(submission_id: str):
        try:
            path = store.image_path(submission_id)
        except UnknownSubmissionError as exc:
            raise HTTPException(404, str(exc))
        return Response(content=Path(path).read_bytes(),
                        media_type="image/x-portable-pixmap")

    @app.get("/metrics", response_model=MetricsModel)
    def metrics():
        m = store.metrics()
        return MetricsModel(pending_review=m["counts"]["PENDING_REVIEW"], **m)

    @app.post("/export")
    def export(body: ExportRequest):
        try:
            manifest = store.export_labels(body.destination)
        except StateError as exc:
            raise HTTPException(400, str(exc))
        return {"destination": body.destination,
                "manifest": "manifest.jsonl",
                "records": len(manifest.records)}

    return app
