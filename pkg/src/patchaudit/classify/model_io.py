"""Versioned JSON persistence for trained models.

Floats are serialized with Python's shortest round-trip representation, so
a reloaded model produces bit-identical predictions on every input.
"""

from __future__ import annotations

import json

import numpy as np

from ..errors import PatchAuditError
from .forest import ForestParams, RandomForest, Tree
from .softmax import SoftmaxParams, SoftmaxProbe

FORMAT_VERSION = 1


def save_model(model, path) -> None:
    if isinstance(model, RandomForest):
        doc = {
            "format_version": FORMAT_VERSION,
            "kind": "forest",
            "schema": model.schema,
            "class_names": model.class_names,
            "params": model.params.to_dict(),
            "seed": model.seed,
            "trees": [
                {
                    "feature": t.feature.tolist(),
                    "threshold": t.threshold.tolist(),
                    "left": t.left.tolist(),
                    "right": t.right.tolist(),
                    "probs": t.probs.tolist(),
                }
                for t in model.trees
            ],
        }
    elif isinstance(model, SoftmaxProbe):
        doc = {
            "format_version": FORMAT_VERSION,
            "kind": "softmax",
            "schema": model.schema,
            "class_names": model.class_names,
            "params": model.params.to_dict(),
            "weights": model.weights.tolist(),
        }
    else:
        raise PatchAuditError(f"cannot serialize model of type {type(model).__name__}")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise PatchAuditError(f"{path}: not a valid model file: {exc}") from None
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise PatchAuditError(
            f"{path}: unsupported model format version {version!r}"
        )
    kind = doc.get("kind")
    if kind == "forest":
        trees = [
            Tree(
                feature=np.asarray(t["feature"], dtype=np.int32),
                threshold=np.asarray(t["threshold"], dtype=np.float64),
                left=np.asarray(t["left"], dtype=np.int32),
                right=np.asarray(t["right"], dtype=np.int32),
                probs=np.asarray(t["probs"], dtype=np.float64),
            )
            for t in doc["trees"]
        ]
        return RandomForest(
            trees=trees,
            n_classes=len(doc["class_names"]),
            schema=doc["schema"],
            class_names=list(doc["class_names"]),
            params=ForestParams(**doc["params"]),
            seed=doc["seed"],
        )
    if kind == "softmax":
        return SoftmaxProbe(
            weights=np.asarray(doc["weights"], dtype=np.float64),
            schema=doc["schema"],
            class_names=list(doc["class_names"]),
            params=SoftmaxParams(**doc["params"]),
        )
    raise PatchAuditError(f"{path}: unknown model kind {kind!r}")
