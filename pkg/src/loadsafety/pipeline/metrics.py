"""Confusion matrices and the five derived metrics.

Any metric whose denominator is zero is defined as 0 and flagged as
degenerate rather than raising; only an entirely empty matrix is an error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..engine import softmax_cross_entropy
from .checkpoint import Checkpoint, restore_model


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int
    positive: str = "1"

    def __post_init__(self):
        for name in ("tp", "fp", "fn", "tn"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn

    def transposed(self) -> "ConfusionMatrix":
        """The same counts with positive and negative classes swapped."""
        return ConfusionMatrix(self.tn, self.fn, self.fp, self.tp,
                               positive=f"not-{self.positive}")


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    mcc: float
    degenerate: bool = False


def compute_metrics(cm: ConfusionMatrix) -> MetricsReport:
    if cm.total == 0:
        raise ValueError("cannot compute metrics over an empty confusion matrix")
    degenerate = False

    accuracy = (cm.tp + cm.tn) / cm.total

    if cm.tp + cm.fp == 0:
        precision, degenerate = 0.0, True
    else:
        precision = cm.tp / (cm.tp + cm.fp)

    if cm.tp + cm.fn == 0:
        recall, degenerate = 0.0, True
    else:
        recall = cm.tp / (cm.tp + cm.fn)

    if precision + recall == 0:
        f1, degenerate = 0.0, True
    else:
        f1 = 2 * precision * recall / (precision + recall)

    denom = (cm.tp + cm.fp) * (cm.tp + cm.fn) * (cm.tn + cm.fp) * (cm.tn + cm.fn)
    if denom == 0:
        mcc, degenerate = 0.0, True
    else:
        mcc = (cm.tp * cm.tn - cm.fp * cm.fn) / math.sqrt(denom)

    return MetricsReport(accuracy, precision, recall, f1, mcc, degenerate)


def confusion_from_predictions(predictions, labels, positive=1,
                               positive_name="1") -> ConfusionMatrix:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise ValueError(
            f"predictions {predictions.shape} and labels {labels.shape} differ"
        )
    tp = int(np.sum((predictions == positive) & (labels == positive)))
    fp = int(np.sum((predictions == positive) & (labels != positive)))
    fn = int(np.sum((predictions != positive) & (labels == positive)))
    tn = int(np.sum((predictions != positive) & (labels != positive)))
    return ConfusionMatrix(tp, fp, fn, tn, positive=positive_name)


def evaluate(checkpoint: Checkpoint, labeled_set, positive) -> ConfusionMatrix:
    """Inference-mode evaluation of a checkpoint over (images, labels).

    `positive` may be a class name from the checkpoint or an integer
    class index; the confusion matrix is counted with that class as
    positive.
    """
    x, y = labeled_set
    if len(x) == 0:
        raise ValueError("evaluation set must be non-empty")
    y = np.asarray(y, dtype=np.int64)
    num_classes = len(checkpoint.class_names)
    if y.min() < 0 or y.max() >= num_classes:
        raise ValueError(
            f"labels out of range for classes {checkpoint.class_names}"
        )
    if isinstance(positive, str):
        if positive not in checkpoint.class_names:
            raise ValueError(
                f"positive class {positive!r} not among {checkpoint.class_names}"
            )
        pos_idx = checkpoint.class_names.index(positive)
        pos_name = positive
    else:
        pos_idx = int(positive)
        if not 0 <= pos_idx < num_classes:
            raise ValueError(f"positive index {pos_idx} out of range")
        pos_name = checkpoint.class_names[pos_idx]

    model = restore_model(checkpoint)
    preds = []
    for lo in range(0, len(x), 64):
        logits = model.forward(x[lo:lo + 64], mode="infer")
        preds.append(np.argmax(logits, axis=1))
    predictions = np.concatenate(preds)
    return confusion_from_predictions(predictions, y, positive=pos_idx,
                                      positive_name=pos_name)


def validation_loss(checkpoint: Checkpoint, labeled_set) -> float:
    x, y = labeled_set
    model = restore_model(checkpoint)
    total = 0.0
    for lo in range(0, len(x), 64):
        logits = model.forward(x[lo:lo + 64], mode="infer")
        loss, _ = softmax_cross_entropy(logits, np.asarray(y[lo:lo + 64]))
        total += loss * len(logits)
    return total / len(x)
