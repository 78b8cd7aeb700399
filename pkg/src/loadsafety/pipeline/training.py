"""Mini-batch training with validation tracking and overfit detection.

The loop keeps the parameter snapshot from the epoch with the lowest
validation loss and stops early once `patience` consecutive epochs fail
to improve that minimum by at least `min_delta`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..architectures import ArchitectureSpec
from ..engine import sgd_step, softmax_cross_entropy
from ..imaging import AugmentationConfig, Image, augment
from ..model import SequentialModel
from .checkpoint import Checkpoint, checkpoint_from_model

_SHUFFLE_TAG = 3 << 62


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch, value):
        self.epoch = epoch
        super().__init__(f"training diverged at epoch {epoch} (loss {value})")


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 16
    lr: float = 0.01
    momentum: float = 0.9
    seed: int = 0
    augmentation: AugmentationConfig | None = None
    patience: int = 5
    min_delta: float = 0.005
    resolution: int = 64

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")


@dataclass(frozen=True)
class HistoryRow:
    epoch: int
    loss: float
    valloss: float
    valacc: float


@dataclass
class TrainingHistory:
    rows: list = field(default_factory=list)

    def val_losses(self):
        return [r.valloss for r in self.rows]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "loss", "valloss", "valacc"])
            for row in self.rows:
                writer.writerow([row.epoch, f"{row.loss:.6f}",
                                 f"{row.valloss:.6f}", f"{row.valacc:.6f}"])

    @classmethod
    def from_csv(cls, path) -> "TrainingHistory":
        history = cls()
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                history.rows.append(HistoryRow(int(rec["epoch"]), float(rec["loss"]),
                                               float(rec["valloss"]), float(rec["valacc"])))
        return history


def detect_overfit(history: TrainingHistory, patience: int, min_delta: float):
    """Index of the epoch with minimum validation loss, once `patience`
    consecutive epochs each failed to improve that minimum by >= min_delta;
    None while training is still improving."""
    if patience < 1:
        raise ValueError(f"patience must be >= 1, got {patience}")
    losses = history.val_losses() if isinstance(history, TrainingHistory) else list(history)
    best = math.inf
    argmin = None
    streak = 0
    for epoch, value in enumerate(losses):
        if argmin is None or value < losses[argmin]:
            argmin = epoch
        if best - value >= min_delta:
            best = value
            streak = 0
        else:
            streak += 1
            if streak >= patience:
                return argmin
    return None


def _augment_batch(x, indices, cfg: AugmentationConfig, epoch, total):
    out = np.empty_like(x)
    for row, idx in enumerate(indices):
        img = Image(x[row].transpose(1, 2, 0))
        out[row] = augment(img, cfg, epoch * total + int(idx)).pixels.transpose(2, 0, 1)
    return out


def _batch_eval(model, x, y, batch_size=64):
    total_loss = 0.0
    correct = 0
    for lo in range(0, len(x), batch_size):
        xb = x[lo:lo + batch_size]
        yb = y[lo:lo + batch_size]
        logits = model.forward(xb, mode="infer")
        loss, _ = softmax_cross_entropy(logits, yb)
        total_loss += loss * len(xb)
        correct += int((np.argmax(logits, axis=1) == yb).sum())
    return total_loss / len(x), correct / len(x)


def train(spec: ArchitectureSpec, train_set, val_set, cfg: TrainConfig,
          class_names=("0", "1")):
    """Returns (best-epoch Checkpoint, TrainingHistory).

    train_set / val_set are (images, labels) with images already at the
    spec resolution, shaped (N, C, H, W) float32.
    """
    x_train, y_train = train_set
    x_val, y_val = val_set
    if len(x_train) == 0 or len(x_val) == 0:
        raise ValueError("training and validation sets must be non-empty")
    y_train = np.asarray(y_train, dtype=np.int64)
    y_val = np.asarray(y_val, dtype=np.int64)
    num_classes = spec.layers[-1].width
    for name, labels in (("train", y_train), ("validation", y_val)):
        if labels.min() < 0 or labels.max() >= num_classes:
            raise ValueError(
                f"{name} labels out of range for a {num_classes}-way head"
            )

    model = SequentialModel(spec, seed=cfg.seed)
    history = TrainingHistory()
    best_checkpoint = None
    best_valloss = math.inf
    step = 0
    n = len(x_train)

    for epoch in range(cfg.epochs):
        order = np.random.Generator(
            np.random.Philox(key=[cfg.seed, _SHUFFLE_TAG | epoch])).permutation(n)
        epoch_loss = 0.0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            xb = x_train[idx]
            if cfg.augmentation is not None:
                xb = _augment_batch(xb, idx, cfg.augmentation, epoch, n)
            logits = model.forward(xb, mode="train", step=step)
            loss, grad = softmax_cross_entropy(logits, y_train[idx])
            if not math.isfinite(loss):
                raise TrainingDiverged(epoch, loss)
            epoch_loss += loss * len(idx)
            model.params.zero_grads()
            model.backward(grad.data)
            sgd_step(model.params, lr=cfg.lr, momentum=cfg.momentum)
            step += 1
        train_loss = epoch_loss / n
        val_loss, val_acc = _batch_eval(model, x_val, y_val)
        if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
            raise TrainingDiverged(epoch, val_loss)
        history.rows.append(HistoryRow(epoch, train_loss, val_loss, val_acc))
        if val_loss < best_valloss:
            best_valloss = val_loss
            best_checkpoint = checkpoint_from_model(model, epoch, class_names)
        if detect_overfit(history, cfg.patience, cfg.min_delta) is not None:
            break

    return best_checkpoint, history
