"""Submission intake, human review queue, and label export."""

from .store import (
    ClaimError,
    ConflictError,
    ReviewDecision,
    ReviewStore,
    StateError,
    StoreError,
    Submission,
    UnknownSubmissionError,
)
from .api import ServiceConfig, create_app

__all__ = [
    "ClaimError", "ConflictError", "ReviewDecision", "ReviewStore",
    "StateError", "StoreError", "Submission", "UnknownSubmissionError",
    "ServiceConfig", "create_app",
]
