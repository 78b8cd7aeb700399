"""Training, evaluation, checkpointing, and the two-stage classifier."""

from .training import TrainConfig, TrainingHistory, HistoryRow, TrainingDiverged, train, detect_overfit
from .metrics import ConfusionMatrix, MetricsReport, compute_metrics, evaluate
from .checkpoint import (
    Checkpoint,
    CheckpointError,
    ChecksumError,
    VersionError,
    checkpoint_from_model,
    load_checkpoint,
    save_checkpoint,
    restore_model,
)
from .classify import Outcome, TwoStageVerdict, TwoStageClassifier, classify_two_stage

__all__ = [
    "TrainConfig", "TrainingHistory", "HistoryRow", "TrainingDiverged",
    "train", "detect_overfit",
    "ConfusionMatrix", "MetricsReport", "compute_metrics", "evaluate",
    "Checkpoint", "CheckpointError", "ChecksumError", "VersionError",
    "checkpoint_from_model", "load_checkpoint", "save_checkpoint",
    "restore_model",
    "Outcome", "TwoStageVerdict", "TwoStageClassifier", "classify_two_stage",
]
