"""Multinomial logistic probe trained by full-batch gradient descent.

Stands in as the shallow classifier over externally computed descriptors.
Training starts from zero weights, so the initial loss is exactly
ln(n_classes), and the recorded loss sequence is non-increasing: a step
that would raise the loss is retried at half the learning rate, up to ten
halvings in total.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import TrainingError
from ..features import FeatureTable

MAX_HALVINGS = 10


@dataclass
class SoftmaxParams:
    learning_rate: float = 0.5
    epochs: int = 300
    l2: float = 1e-4
    seed: int = 0  # kept for interface parity; full-batch training is deterministic

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "l2": self.l2,
            "seed": self.seed,
        }


def _augment(X: np.ndarray) -> np.ndarray:
    return np.hstack([X, np.ones((X.shape[0], 1))])


def softmax_probabilities(weights: np.ndarray, X_aug: np.ndarray) -> np.ndarray:
    z = X_aug @ weights.T
    z -= z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_loss(weights: np.ndarray, X_aug: np.ndarray, y: np.ndarray, l2: float) -> float:
    """Mean cross-entropy plus (l2/2) * squared norm of the non-bias weights."""
    p = softmax_probabilities(weights, X_aug)
    n = X_aug.shape[0]
    nll = -np.log(np.maximum(p[np.arange(n), y], 1e-300)).mean()
    return float(nll + 0.5 * l2 * np.sum(weights[:, :-1] ** 2))


def softmax_gradient(weights: np.ndarray, X_aug: np.ndarray, y: np.ndarray, l2: float) -> np.ndarray:
    p = softmax_probabilities(weights, X_aug)
    n = X_aug.shape[0]
    p[np.arange(n), y] -= 1.0
    grad = p.T @ X_aug / n
    grad[:, :-1] += l2 * weights[:, :-1]  # bias column is not regularized
    return grad


@dataclass
class SoftmaxProbe:
    weights: np.ndarray  # (n_classes, dim + 1), bias folded into the last column
    schema: str
    class_names: list[str]
    params: SoftmaxParams

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1] - 1

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ValueError(
                f"feature matrix has {X.shape[1] if X.ndim == 2 else '?'} columns, "
                f"model schema {self.schema!r} expects {self.dim}"
            )
        return softmax_probabilities(self.weights, _augment(X))

    def predict_labels(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)


def train_softmax(table: FeatureTable, params: SoftmaxParams | None = None) -> SoftmaxProbe:
    """Fit the probe on every row of the table by full-batch descent."""
    params = params or SoftmaxParams()
    if len(table) == 0:
        raise TrainingError("cannot train on an empty feature table")
    if np.unique(table.labels).size < 2:
        raise TrainingError("training rows contain a single class; model is degenerate")
    X_aug = _augment(table.values)
    y = table.labels
    n_classes = len(table.class_names)
    weights = np.zeros((n_classes, X_aug.shape[1]), dtype=np.float64)
    lr = params.learning_rate
    halvings = 0
    loss = softmax_loss(weights, X_aug, y, params.l2)
    for epoch in range(params.epochs):
        grad = softmax_gradient(weights, X_aug, y, params.l2)
        while True:
            candidate = weights - lr * grad
            new_loss = softmax_loss(candidate, X_aug, y, params.l2)
            if not np.isfinite(new_loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            if new_loss <= loss:
                break
            halvings += 1
            if halvings > MAX_HALVINGS:
                raise TrainingError(
                    f"loss failed to decrease at epoch {epoch} after "
                    f"{MAX_HALVINGS} learning-rate halvings"
                )
            lr /= 2.0
        weights = candidate
        loss = new_loss
    return SoftmaxProbe(
        weights=weights,
        schema=table.schema,
        class_names=list(table.class_names),
        params=params,
    )
