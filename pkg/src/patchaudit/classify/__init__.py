"""Shallow classifiers over feature tables: random forest and softmax probe."""

from .forest import ForestParams, RandomForest, Tree, train_forest
from .metrics import (
    ConfusionMatrix,
    EvaluationResult,
    confusion_matrix,
    evaluate,
    predict,
)
from .model_io import load_model, save_model
from .softmax import (
    SoftmaxParams,
    SoftmaxProbe,
    softmax_gradient,
    softmax_loss,
    softmax_probabilities,
    train_softmax,
)

__all__ = [
    "ForestParams",
    "RandomForest",
    "Tree",
    "train_forest",
    "ConfusionMatrix",
    "EvaluationResult",
    "confusion_matrix",
    "evaluate",
    "predict",
    "load_model",
    "save_model",
    "SoftmaxParams",
    "SoftmaxProbe",
    "softmax_gradient",
    "softmax_loss",
    "softmax_probabilities",
    "train_softmax",
]
