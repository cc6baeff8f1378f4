"""Confusion matrices and the two tuning objectives.

Overall accuracy is maximized; false negatives of the rest class (true rest
predicted as any movement, which would actuate the hand spuriously) are
minimized. rest_fn is reported as a raw count, with a normalized rate
available for cross-dataset comparison.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import REST_CLASS, MovementClass

N_CLASSES = len(MovementClass)


@dataclass
class ConfusionMatrix:
    """counts[true, predicted] over the eight classes."""

    counts: np.ndarray = field(default_factory=lambda: np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64))

    def __post_init__(self) -> None:
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (N_CLASSES, N_CLASSES):
            raise ValueError(f"confusion matrix must be {N_CLASSES}x{N_CLASSES}")
        if np.any(self.counts < 0):
            raise ValueError("confusion matrix entries must be non-negative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)

    def to_csv(self, path: str) -> None:
        names = [c.name for c in MovementClass]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["true\\pred"] + names)
            for cls, row in zip(MovementClass, self.counts):
                writer.writerow([cls.name] + [int(v) for v in row])


def confusion(preds: Sequence[MovementClass], labels: Sequence[MovementClass]) -> ConfusionMatrix:
    if len(preds) != len(labels):
        raise ValueError(f"length mismatch: {len(preds)} predictions vs {len(labels)} labels")
    counts = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    for pred, true in zip(preds, labels):
        if not isinstance(pred, MovementClass) or not isinstance(true, MovementClass):
            raise ValueError(f"unknown class in pair ({pred!r}, {true!r})")
        counts[true.index, pred.index] += 1
    return ConfusionMatrix(counts)


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    return float(np.trace(cm.counts)) / cm.total


def rest_fn(cm: ConfusionMatrix) -> int:
    """True-rest samples predicted as any movement class."""
    row = cm.counts[REST_CLASS.index]
    return int(row.sum() - row[REST_CLASS.index])


def rest_fn_rate(cm: ConfusionMatrix) -> float:
    total = int(cm.counts[REST_CLASS.index].sum())
    if total == 0:
        raise ValueError("no rest samples")
    return rest_fn(cm) / total


def rest_recall(cm: ConfusionMatrix) -> float:
    row = cm.counts[REST_CLASS.index]
    total = int(row.sum())
    if total == 0:
        raise ValueError("no rest samples")
    return float(row[REST_CLASS.index]) / total
