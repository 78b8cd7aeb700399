"""Two-stage decision tree over a photo.

Stage 1 gates usability: an UNUSABLE verdict ends the walk immediately.
Usable photos go to stage 2 when a model is configured and confident;
anything else lands in NEEDS_REVIEW, the human path.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from ..imaging import Image, resize_bilinear
from .checkpoint import Checkpoint, restore_model

STAGE1_CLASSES = ("USABLE", "UNUSABLE")
STAGE2_CLASSES = ("SAFE", "UNSAFE")

DEFAULT_REVIEW_THRESHOLD = 0.8


class Outcome(str, Enum):
    UNUSABLE = "UNUSABLE"
    SAFE = "SAFE"
    UNSAFE = "UNSAFE"
    NEEDS_REVIEW = "NEEDS_REVIEW"


@dataclass(frozen=True)
class TwoStageVerdict:
    outcome: Outcome
    stage1_confidence: float
    stage2_confidence: float | None = None

    def __post_init__(self):
        if self.outcome is Outcome.NEEDS_REVIEW and self.stage2_confidence is not None:
            raise ValueError("NEEDS_REVIEW must not carry a stage-2 confidence")
        if not 0.0 <= self.stage1_confidence <= 1.0:
            raise ValueError(f"confidence out of range: {self.stage1_confidence}")
        if self.stage2_confidence is not None and not 0.0 <= self.stage2_confidence <= 1.0:
            raise ValueError(f"confidence out of range: {self.stage2_confidence}")


def _softmax(logits):
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


class TwoStageClassifier:
    """Holds the restored models so repeated calls skip checkpoint setup."""

    def __init__(self, stage1: Checkpoint, stage2: Checkpoint | None = None,
                 review_threshold: float = DEFAULT_REVIEW_THRESHOLD):
        if stage1 is None:
            raise ValueError("a stage-1 checkpoint is required")
        if tuple(stage1.class_names) != STAGE1_CLASSES:
            raise ValueError(
                f"stage-1 checkpoint classifies {stage1.class_names}, "
                f"expected {STAGE1_CLASSES}"
            )
        if stage2 is not None and tuple(stage2.class_names) != STAGE2_CLASSES:
            raise ValueError(
                f"stage-2 checkpoint classifies {stage2.class_names}, "
                f"expected {STAGE2_CLASSES}"
            )
        if not 0.0 <= review_threshold <= 1.0:
            raise ValueError(f"review_threshold must be in [0,1], got {review_threshold}")
        self.stage1 = restore_model(stage1)
        self.stage2 = restore_model(stage2) if stage2 is not None else None
        self.review_threshold = review_threshold

    def _probabilities(self, model, img: Image):
        res = model.input_resolution
        resized = resize_bilinear(img, res, res)
        x = resized.pixels.transpose(2, 0, 1)[None, ...]
        logits = model.forward(x, mode="infer")[0]
        return _softmax(logits)

    def classify(self, img: Image) -> TwoStageVerdict:
        p1 = self._probabilities(self.stage1, img)
        stage1_pred = int(np.argmax(p1))
        stage1_conf = float(p1[stage1_pred])
        if STAGE1_CLASSES[stage1_pred] == "UNUSABLE":
            return TwoStageVerdict(Outcome.UNUSABLE, stage1_conf)
        if self.stage2 is None:
            return TwoStageVerdict(Outcome.NEEDS_REVIEW, stage1_conf)
        p2 = self._probabilities(self.stage2, img)
        stage2_pred = int(np.argmax(p2))
        stage2_conf = float(p2[stage2_pred])
        if stage2_conf >= self.review_threshold:
            return TwoStageVerdict(Outcome(STAGE2_CLASSES[stage2_pred]),
                                   stage1_conf, stage2_conf)
        return TwoStageVerdict(Outcome.NEEDS_REVIEW, stage1_conf)


def classify_two_stage(img: Image, stage1: Checkpoint,
                       stage2: Checkpoint | None = None,
                       review_threshold: float = DEFAULT_REVIEW_THRESHOLD) -> TwoStageVerdict:
    return TwoStageClassifier(stage1, stage2, review_threshold).classify(img)
