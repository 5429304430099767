"""Confusion-matrix evaluation: accuracy, balanced accuracy, per-class recall."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ..features import FeatureTable

log = logging.getLogger(__name__)


@dataclass
class ConfusionMatrix:
    """Counts with rows = true class, columns = predicted class."""

    counts: np.ndarray  # (n_classes, n_classes) int64
    class_names: list[str]

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        k = len(self.class_names)
        if self.counts.shape != (k, k):
            raise ValueError(f"counts must be {k}x{k}, got {self.counts.shape}")
        if (self.counts < 0).any():
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.total

    @property
    def per_class_recall(self) -> np.ndarray:
        """Diagonal over row sums; NaN for classes with no true samples."""
        row = self.counts.sum(axis=1)
        with np.errstate(invalid="ignore"):
            return np.where(row > 0, np.diag(self.counts) / row, np.nan)

    @property
    def balanced_accuracy(self) -> float:
        """Mean recall over classes that have at least one true sample.

        Counts are integers, so the mean of recalls is computed as an exact
        rational and rounded to float once; a balanced test set therefore
        yields balanced accuracy exactly equal to overall accuracy.
        """
        row = self.counts.sum(axis=1)
        present = np.nonzero(row > 0)[0]
        if present.size < len(self.class_names):
            missing = [self.class_names[i] for i in range(len(self.class_names))
                       if i not in present]
            log.warning("classes with no test samples excluded from balanced "
                        "accuracy: %s", ", ".join(missing))
        total = Fraction(0)
        for i in present:
            total += Fraction(int(self.counts[i, i]), int(row[i]))
        return float(total / len(present))


def confusion_matrix(y_true, y_pred, class_names: list[str]) -> ConfusionMatrix:
    k = len(class_names)
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    counts = np.bincount(y_true * k + y_pred, minlength=k * k).reshape(k, k)
    return ConfusionMatrix(counts=counts, class_names=list(class_names))


@dataclass
class EvaluationResult:
    confusion: ConfusionMatrix
    accuracy: float
    balanced_accuracy: float
    per_class_recall: np.ndarray


def predict(model, feature_vector: np.ndarray) -> tuple[int, np.ndarray]:
    """Single-vector prediction: (argmax class, probability vector).

    Ties in the probability vector break toward the lowest class index.
    """
    probs = model.predict_proba(np.asarray(feature_vector, dtype=np.float64)[None, :])[0]
    return int(np.argmax(probs)), probs


def evaluate(model, table: FeatureTable) -> EvaluationResult:
    """Evaluate a trained model on every row of the table."""
    if model.schema != table.schema:
        raise ValueError(
            f"model schema {model.schema!r} does not match feature schema "
            f"{table.schema!r}"
        )
    if list(model.class_names) != list(table.class_names):
        raise ValueError("model and feature table disagree on class names")
    preds = model.predict_labels(table.values)
    cm = confusion_matrix(table.labels, preds, table.class_names)
    return EvaluationResult(
        confusion=cm,
        accuracy=cm.accuracy,
        balanced_accuracy=cm.balanced_accuracy,
        per_class_recall=cm.per_class_recall,
    )
