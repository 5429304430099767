"""Random forest of Gini decision trees with deterministic seeding.

Each tree trains on a bootstrap resample drawn from its own RNG stream,
seeded as PCG64(SeedSequence([master_seed, tree_index])). Because every
stream is independent and tree results are assembled by index, training is
bit-reproducible at any thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ..errors import TrainingError
from ..features import FeatureTable
from ..parallel import ordered_map


@dataclass
class ForestParams:
    n_trees: int = 200
    max_depth: int | None = None
    min_samples_leaf: int = 1
    features_per_split: int | None = None  # None -> round(sqrt(dim))
    bootstrap: bool = True

    def resolve_features_per_split(self, dim: int) -> int:
        if self.features_per_split is not None:
            return max(1, min(self.features_per_split, dim))
        return max(1, min(int(round(math.sqrt(dim))), dim))

    def to_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
            "features_per_split": self.features_per_split,
            "bootstrap": self.bootstrap,
        }


@dataclass
class Tree:
    """Flat-array binary tree; feature == -1 marks a leaf.

    Leaf rows of probs hold class frequencies of the node's training
    sample (they sum to 1); internal rows are zero.
    """

    feature: np.ndarray  # (n_nodes,) int32
    threshold: np.ndarray  # (n_nodes,) float64
    left: np.ndarray  # (n_nodes,) int32
    right: np.ndarray  # (n_nodes,) int32
    probs: np.ndarray  # (n_nodes, n_classes) float64

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of X."""
        node = np.zeros(X.shape[0], dtype=np.int32)
        while True:
            feat = self.feature[node]
            live = feat >= 0
            if not live.any():
                return node
            rows = np.nonzero(live)[0]
            cur = node[rows]
            go_left = X[rows, feat[rows]] <= self.threshold[cur]
            node[rows] = np.where(go_left, self.left[cur], self.right[cur])


@njit(cache=True, nogil=True)
def _grow_node(X, y, idx, feats, n_classes, min_leaf):
    """Evaluate one node: class counts, best Gini split, sample partition.

    Returns (counts, feature, threshold, left_idx, right_idx); feature is
    -1 when the node is pure or no candidate feature admits a split.
    Thresholds are midpoints of consecutive distinct sorted values; ties in
    impurity resolve to the first candidate feature, then the lowest
    threshold.
    """
    n = idx.shape[0]
    counts = np.zeros(n_classes, np.int64)
    for i in range(n):
        counts[y[idx[i]]] += 1
    empty = np.empty(0, np.int64)
    if counts.max() == n:
        return counts, -1, 0.0, empty, empty
    sq_total = 0.0
    for c in range(n_classes):
        sq_total += counts[c] * counts[c]
    col = np.empty(n, np.float64)
    best_score = np.inf
    best_j = -1
    best_thr = 0.0
    for j in range(feats.shape[0]):
        f = feats[j]
        for i in range(n):
            col[i] = X[idx[i], f]
        order = np.argsort(col, kind="mergesort")
        left_counts = np.zeros(n_classes, np.int64)
        sq_left = 0.0
        sq_right = sq_total
        for pos in range(n - 1):
            c = y[idx[order[pos]]]
            # maintain sums of squared class counts incrementally
            sq_left += 2.0 * left_counts[c] + 1.0
            sq_right -= 2.0 * (counts[c] - left_counts[c]) - 1.0
            left_counts[c] += 1
            n_left = pos + 1
            n_right = n - n_left
            if n_left < min_leaf or n_right < min_leaf:
                continue
            lo = col[order[pos]]
            hi = col[order[pos + 1]]
            if lo == hi:
                continue
            # weighted Gini, up to a shared affine transform
            score = -(sq_left / n_left + sq_right / n_right)
            if score < best_score:
                best_score = score
                best_j = j
                best_thr = (lo + hi) / 2.0
    if best_j < 0:
        return counts, -1, 0.0, empty, empty
    f = feats[best_j]
    n_left = 0
    for i in range(n):
        if X[idx[i], f] <= best_thr:
            n_left += 1
    left_idx = np.empty(n_left, np.int64)
    right_idx = np.empty(n - n_left, np.int64)
    a = 0
    b = 0
    for i in range(n):
        if X[idx[i], f] <= best_thr:
            left_idx[a] = idx[i]
            a += 1
        else:
            right_idx[b] = idx[i]
            b += 1
    return counts, int(f), best_thr, left_idx, right_idx


def _build_tree(X, y, n_classes, params: ForestParams, rng) -> Tree:
    """Grow one tree depth-first (left before right) on a bootstrap sample."""
    n_total, dim = X.shape
    k = params.resolve_features_per_split(dim)
    min_leaf = params.min_samples_leaf
    if params.bootstrap:
        sample = rng.integers(0, n_total, n_total)
    else:
        sample = np.arange(n_total, dtype=np.int64)
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    probs: list[np.ndarray] = []
    zero = np.zeros(n_classes, dtype=np.float64)
    stack = [(sample, 0, -1, False)]
    while stack:
        idx, depth, parent, is_right = stack.pop()
        node_id = len(feature)
        if parent >= 0:
            (right if is_right else left)[parent] = node_id
        n = idx.shape[0]
        can_split = n >= max(2, 2 * min_leaf) and (
            params.max_depth is None or depth < params.max_depth
        )
        if can_split:
            feats = rng.choice(dim, k, replace=False).astype(np.int64)
            counts, f, thr, left_idx, right_idx = _grow_node(
                X, y, idx, feats, n_classes, min_leaf
            )
        else:
            counts = np.bincount(y[idx], minlength=n_classes)
            f = -1
        if f < 0:
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            probs.append(counts / n)
            continue
        feature.append(f)
        threshold.append(thr)
        left.append(-1)
        right.append(-1)
        probs.append(zero)
        stack.append((right_idx, depth + 1, node_id, True))
        stack.append((left_idx, depth + 1, node_id, False))
    return Tree(
        feature=np.asarray(feature, dtype=np.int32),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        probs=np.asarray(probs, dtype=np.float64),
    )


@dataclass
class RandomForest:
    trees: list[Tree]
    n_classes: int
    schema: str
    class_names: list[str]
    params: ForestParams
    seed: int

    @property
    def dim(self) -> int:
        from ..features import schema_dim

        return schema_dim(self.schema)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """Mean of leaf frequency vectors across trees; rows sum to 1."""
        X = self._check(X)
        acc = np.zeros((X.shape[0], self.n_classes), dtype=np.float64)
        for tree in self.trees:
            acc += tree.probs[tree.apply(X)]
        return acc / len(self.trees)

    def predict_labels(self, X: np.ndarray) -> np.ndarray:
        # np.argmax breaks ties toward the lowest class index
        return np.argmax(self.predict_proba(X), axis=1)

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ValueError(
                f"feature matrix has {X.shape[1] if X.ndim == 2 else '?'} columns, "
                f"model schema {self.schema!r} expects {self.dim}"
            )
        return X


def train_forest(
    table: FeatureTable,
    params: ForestParams | None = None,
    seed: int = 0,
    threads: int = 1,
) -> RandomForest:
    """Train a forest on every row of the table.

    Requires at least two distinct classes among the rows. Tree t draws all
    of its randomness (bootstrap indices, then per-node feature subsets in
    depth-first order) from PCG64(SeedSequence([seed, t])), so the result
    depends only on (table, params, seed).
    """
    params = params or ForestParams()
    if len(table) == 0:
        raise TrainingError("cannot train on an empty feature table")
    if np.unique(table.labels).size < 2:
        raise TrainingError("training rows contain a single class; model is degenerate")
    if params.n_trees < 1:
        raise TrainingError("n_trees must be >= 1")
    X = np.ascontiguousarray(table.values, dtype=np.float64)
    y = np.ascontiguousarray(table.labels, dtype=np.int64)
    n_classes = len(table.class_names)

    def build(t: int) -> Tree:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, t])))
        return _build_tree(X, y, n_classes, params, rng)

    trees = ordered_map(build, range(params.n_trees), threads)
    return RandomForest(
        trees=trees,
        n_classes=n_classes,
        schema=table.schema,
        class_names=list(table.class_names),
        params=params,
        seed=seed,
    )
