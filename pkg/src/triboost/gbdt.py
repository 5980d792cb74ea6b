"""Second-order (Newton) gradient-boosted regression trees.

A deliberately small, exact engine: no histogram binning, no row/column
subsampling.  Split finding enumerates midpoints between consecutive
distinct sorted feature values and scores them with the usual second-order
gain; leaf weights are ``-G/(H + lambda)``.  Objectives are pluggable —
anything that maps the full prediction vector to per-row gradient/Hessian
pairs (see :class:`Objective`) — which is how the group-coupled losses in
:mod:`triboost.objectives` drive the same engine as plain squared error.

Determinism contract: identical inputs give bit-identical models, whatever
the thread count.  Gradient/Hessian sums are accumulated left-to-right in
ascending row order (``np.cumsum``), ties between candidate splits resolve
to the lowest feature index then the lowest threshold, and the thread pool
only fans out per-feature scans whose results are merged in feature order.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Protocol

import numpy as np

from .errors import (
    DegenerateLeafError,
    ObjectiveError,
    PersistenceError,
    ValidationError,
)

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class GradHess:
    """Per-row first/second derivatives of a loss at the current predictions.

    Stored as two aligned vectors.  Hessians must be strictly positive —
    the engine divides by their sums.
    """

    grad: np.ndarray
    hess: np.ndarray

    def __post_init__(self) -> None:
        grad = np.asarray(self.grad, dtype=np.float64)
        hess = np.asarray(self.hess, dtype=np.float64)
        object.__setattr__(self, "grad", grad)
        object.__setattr__(self, "hess", hess)
        if grad.shape != hess.shape or grad.ndim != 1:
            raise ObjectiveError(
                f"grad/hess must be aligned vectors, got {grad.shape} and {hess.shape}"
            )
        if not (np.all(np.isfinite(grad)) and np.all(np.isfinite(hess))):
            raise ObjectiveError("non-finite gradient or hessian")
        if np.any(hess <= 0.0):
            bad = int(np.argmax(hess <= 0.0))
            raise ObjectiveError(
                f"non-positive hessian {hess[bad]} at row {bad}; "
                "objectives must return strictly positive second derivatives"
            )

    def __len__(self) -> int:
        return self.grad.shape[0]


class Objective(Protocol):
    """What the boosting loop needs from a loss function.

    ``grad_hess`` is called once per round at the current predictions;
    ``loss`` is only used for curve recording and tests; ``base_score``
    seeds the ensemble (mean of the stage's targets for the built-in
    losses).
    """

    def base_score(self) -> float: ...

    def loss(self, preds: np.ndarray) -> float: ...

    def grad_hess(self, preds: np.ndarray) -> GradHess: ...


@dataclass(frozen=True)
class TrainConfig:
    """Boosting hyperparameters.

    Note the built-in losses carry 1/m or 1/n factors inside their
    gradients, so Hessian sums per leaf are O(rows/n) and ``reg_lambda`` is
    on that same scale: the default 1.0 acts like a per-sample ridge of
    roughly ``n``, i.e. a much stronger damping than the same number means
    in engines with O(1) per-row hessians.  That damping is deliberate — it
    keeps small leaves from chasing individual rows, at the cost of needing
    a few hundred rounds to converge.  All defaults here are tuning choices
    for the bundled synthetic panels, not universal constants.
    """

    num_rounds: int = 300
    max_depth: int = 4
    learning_rate: float = 0.1
    reg_lambda: float = 1.0
    min_child_weight: float = 0.0
    min_gain: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_rounds < 1:
            raise ValidationError(f"num_rounds must be >= 1, got {self.num_rounds}")
        if self.max_depth < 1:
            raise ValidationError(f"max_depth must be >= 1, got {self.max_depth}")
        if not (0.0 < self.learning_rate <= 1.0):
            raise ValidationError(
                f"learning_rate must be in (0, 1], got {self.learning_rate}"
            )
        if self.reg_lambda < 0.0:
            raise ValidationError(f"reg_lambda must be >= 0, got {self.reg_lambda}")
        if self.min_child_weight < 0.0:
            raise ValidationError(
                f"min_child_weight must be >= 0, got {self.min_child_weight}"
            )
        if self.min_gain < 0.0:
            raise ValidationError(f"min_gain must be >= 0, got {self.min_gain}")


@dataclass(frozen=True)
class SplitCandidate:
    feature: int
    threshold: float
    gain: float


@dataclass(frozen=True)
class SplitNode:
    feature: int
    threshold: float
    left: int
    right: int


@dataclass(frozen=True)
class LeafNode:
    weight: float


@dataclass(frozen=True)
class RegressionTree:
    """One regression tree as a flat node array; node 0 is the root.

    Routing: feature value < threshold goes left, >= threshold goes right.
    """

    nodes: tuple[SplitNode | LeafNode, ...]
    max_depth_reached: int

    def evaluate(self, features: np.ndarray) -> np.ndarray:
        """Per-row raw tree output (no learning rate applied)."""
        out = np.empty(features.shape[0], dtype=np.float64)
        stack: list[tuple[int, np.ndarray]] = [
            (0, np.arange(features.shape[0], dtype=np.intp))
        ]
        while stack:
            idx, rows = stack.pop()
            node = self.nodes[idx]
            if isinstance(node, LeafNode):
                out[rows] = node.weight
            else:
                goes_left = features[rows, node.feature] < node.threshold
                stack.append((node.left, rows[goes_left]))
                stack.append((node.right, rows[~goes_left]))
        return out

    def leaf_count(self) -> int:
        return sum(1 for n in self.nodes if isinstance(n, LeafNode))


@dataclass(frozen=True)
class GbdtModel:
    """A fitted ensemble: prediction = base_score + lr * sum of tree outputs.

    Immutable; prediction is safe under concurrent callers.
    """

    base_score: float
    learning_rate: float
    feature_count: int
    trees: tuple[RegressionTree, ...]

    def predict(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.feature_count:
            raise ValidationError(
                f"expected feature matrix with {self.feature_count} columns, "
                f"got shape {features.shape}"
            )
        out = np.full(features.shape[0], self.base_score, dtype=np.float64)
        for tree in self.trees:
            out += self.learning_rate * tree.evaluate(features)
        return out

    def to_dict(self) -> dict:
        return {
            "version": MODEL_FORMAT_VERSION,
            "base_score": self.base_score,
            "learning_rate": self.learning_rate,
            "feature_count": self.feature_count,
            "trees": [
                {
                    "max_depth_reached": t.max_depth_reached,
                    "nodes": [_node_to_dict(n) for n in t.nodes],
                }
                for t in self.trees
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GbdtModel":
        try:
            version = doc["version"]
            if version != MODEL_FORMAT_VERSION:
                raise PersistenceError(f"unknown model version {version!r}")
            trees = []
            for tdoc in doc["trees"]:
                nodes = [_node_from_dict(nd) for nd in tdoc["nodes"]]
                _check_tree_shape(nodes)
                trees.append(
                    RegressionTree(
                        nodes=tuple(nodes),
                        max_depth_reached=int(tdoc["max_depth_reached"]),
                    )
                )
            return cls(
                base_score=float(doc["base_score"]),
                learning_rate=float(doc["learning_rate"]),
                feature_count=int(doc["feature_count"]),
                trees=tuple(trees),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise PersistenceError(f"malformed model document: {exc}") from exc


def _node_to_dict(node: SplitNode | LeafNode) -> dict:
    if isinstance(node, LeafNode):
        return {"kind": "leaf", "weight": node.weight}
    return {
        "kind": "split",
        "feature": node.feature,
        "threshold": node.threshold,
        "left": node.left,
        "right": node.right,
    }


def _node_from_dict(doc: dict) -> SplitNode | LeafNode:
    kind = doc["kind"]
    if kind == "leaf":
        return LeafNode(weight=float(doc["weight"]))
    if kind == "split":
        return SplitNode(
            feature=int(doc["feature"]),
            threshold=float(doc["threshold"]),
            left=int(doc["left"]),
            right=int(doc["right"]),
        )
    raise PersistenceError(f"unknown node kind {kind!r}")


def _check_tree_shape(nodes: list[SplitNode | LeafNode]) -> None:
    if not nodes:
        raise PersistenceError("tree with no nodes")
    n = len(nodes)
    for i, node in enumerate(nodes):
        if isinstance(node, SplitNode):
            if not (0 <= node.left < n and 0 <= node.right < n):
                raise PersistenceError(f"node {i}: child index out of range")
            if node.left == i or node.right == i or node.left == node.right:
                raise PersistenceError(f"node {i}: malformed children")


def save_model(model: GbdtModel, path: str | Path) -> None:
    """Write a model as JSON.  Floats keep full precision, so a reload
    predicts bit-identically."""
    path = Path(path)
    try:
        text = json.dumps(model.to_dict(), indent=2, sort_keys=True)
        path.write_text(text + "\n", encoding="utf-8")
    except OSError as exc:
        raise PersistenceError(f"cannot write model to {path}: {exc}") from exc


def load_model(path: str | Path) -> GbdtModel:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise PersistenceError(f"cannot read model from {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PersistenceError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise PersistenceError(f"{path}: expected a JSON object")
    return GbdtModel.from_dict(doc)


def leaf_weight(G: float, H: float, reg_lambda: float) -> float:
    """Newton leaf weight -G/(H + lambda)."""
    denom = H + reg_lambda
    if denom <= 0.0:
        raise DegenerateLeafError(
            f"leaf with non-positive hessian sum {H} + lambda {reg_lambda}"
        )
    return -G / denom


def _seq_sum(values: np.ndarray) -> float:
    """Strict left-to-right sum (unlike np.sum's pairwise blocking), so leaf
    statistics are reproducible by any accumulator that walks rows in
    ascending order."""
    if values.shape[0] == 0:
        return 0.0
    return float(np.cumsum(values)[-1])


def _scan_feature(
    feature: int,
    order: np.ndarray,
    in_node: np.ndarray,
    X: np.ndarray,
    grad: np.ndarray,
    hess: np.ndarray,
    config: TrainConfig,
) -> tuple[float, float] | None:
    """Best (gain, threshold) for one feature within one node, or None.

    ``order`` is the whole-matrix ascending order of this feature (stable,
    so ties keep ascending row index); ``in_node`` flags the node's rows.
    """
    sel = order[in_node[order]]
    x = X[sel, feature]
    if x.shape[0] < 2 or x[0] == x[-1]:
        return None
    gs = np.cumsum(grad[sel])
    hs = np.cumsum(hess[sel])
    G, H = gs[-1], hs[-1]
    pos = np.nonzero(x[:-1] < x[1:])[0]
    if pos.shape[0] == 0:
        return None
    thresholds = 0.5 * (x[pos] + x[pos + 1])
    GL, HL = gs[pos], hs[pos]
    GR, HR = G - GL, H - HL
    lam = config.reg_lambda
    gains = 0.5 * (
        GL * GL / (HL + lam) + GR * GR / (HR + lam) - G * G / (H + lam)
    )
    valid = (HL >= config.min_child_weight) & (HR >= config.min_child_weight)
    # Guard against midpoints that round down onto the left value (only
    # possible for adjacent floats); such a threshold would not reproduce
    # the scored partition under the `<` routing rule.
    valid &= thresholds > x[pos]
    if not np.any(valid):
        return None
    gains = np.where(valid, gains, -np.inf)
    best = int(np.argmax(gains))  # first max -> lowest threshold on ties
    return float(gains[best]), float(thresholds[best])


def find_best_split(
    rows: np.ndarray,
    grad: np.ndarray,
    hess: np.ndarray,
    features: np.ndarray,
    config: TrainConfig,
    *,
    presort: np.ndarray | None = None,
    pool: ThreadPoolExecutor | None = None,
) -> SplitCandidate | None:
    """Exhaustive best split over all (feature, midpoint) candidates.

    Returns the maximum-gain candidate whose gain exceeds ``min_gain`` and
    whose children both meet ``min_child_weight``; ties go to the lowest
    feature index, then the lowest threshold.  Returns None when no
    candidate qualifies — a valid outcome, not an error.
    """
    rows = np.asarray(rows, dtype=np.intp)
    if rows.shape[0] == 0:
        raise ValidationError("cannot search for a split over zero rows")
    X = np.asarray(features, dtype=np.float64)
    if presort is None:
        presort = np.argsort(X, axis=0, kind="stable")
    in_node = np.zeros(X.shape[0], dtype=bool)
    in_node[rows] = True

    num_features = X.shape[1]
    scan = lambda f: _scan_feature(f, presort[:, f], in_node, X, grad, hess, config)
    if pool is not None and num_features > 1:
        per_feature = list(pool.map(scan, range(num_features)))
    else:
        per_feature = [scan(f) for f in range(num_features)]

    best: SplitCandidate | None = None
    for f, result in enumerate(per_feature):  # ascending f: ties keep lowest
        if result is None:
            continue
        gain, threshold = result
        if gain <= config.min_gain:
            continue
        if best is None or gain > best.gain:
            best = SplitCandidate(feature=f, threshold=threshold, gain=gain)
    return best


def _grow_tree(
    X: np.ndarray,
    presort: np.ndarray,
    grad: np.ndarray,
    hess: np.ndarray,
    config: TrainConfig,
    pool: ThreadPoolExecutor | None,
) -> tuple[RegressionTree, list[tuple[np.ndarray, float]]]:
    """Grow one tree on fixed grad/hess; returns it plus (rows, weight) per
    leaf so the caller can update predictions without re-routing."""
    nodes: list[SplitNode | LeafNode | None] = []
    leaves: list[tuple[np.ndarray, float]] = []
    deepest = 0

    def build(rows: np.ndarray, depth: int) -> int:
        nonlocal deepest
        deepest = max(deepest, depth)
        split = None
        if depth < config.max_depth and rows.shape[0] >= 2:
            split = find_best_split(
                rows, grad, hess, X, config, presort=presort, pool=pool
            )
        idx = len(nodes)
        if split is None:
            G = _seq_sum(grad[rows])
            H = _seq_sum(hess[rows])
            w = leaf_weight(G, H, config.reg_lambda)
            nodes.append(LeafNode(weight=w))
            leaves.append((rows, w))
            return idx
        nodes.append(None)  # reserve pre-order slot; children follow
        goes_left = X[rows, split.feature] < split.threshold
        left = build(rows[goes_left], depth + 1)
        right = build(rows[~goes_left], depth + 1)
        nodes[idx] = SplitNode(
            feature=split.feature,
            threshold=split.threshold,
            left=left,
            right=right,
        )
        return idx

    build(np.arange(X.shape[0], dtype=np.intp), 0)
    return RegressionTree(nodes=tuple(nodes), max_depth_reached=deepest), leaves


def fit(
    features: np.ndarray,
    objective: Objective,
    config: TrainConfig,
    *,
    n_threads: int = 1,
    loss_history: list[float] | None = None,
) -> GbdtModel:
    """Train an ensemble of ``num_rounds`` trees against ``objective``.

    Each round re-evaluates gradients/Hessians at the current predictions,
    grows one tree maximizing Newton gain, and advances predictions by
    ``learning_rate`` times the leaf weights.  If ``loss_history`` is a
    list, the objective's loss is appended before the first round and after
    every round (length num_rounds + 1).

    ``n_threads`` only parallelizes per-feature split scans; results are
    identical for any thread count.
    """
    X = np.ascontiguousarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValidationError(f"expected a non-empty 2-D feature matrix, got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("feature matrix contains non-finite values")
    n = X.shape[0]
    presort = np.argsort(X, axis=0, kind="stable")
    base = float(objective.base_score())
    preds = np.full(n, base, dtype=np.float64)
    if loss_history is not None:
        loss_history.append(float(objective.loss(preds)))

    pool = ThreadPoolExecutor(max_workers=n_threads) if n_threads > 1 else None
    trees: list[RegressionTree] = []
    try:
        for _ in range(config.num_rounds):
            gh = objective.grad_hess(preds)
            if len(gh) != n:
                raise ObjectiveError(
                    f"objective returned {len(gh)} grad/hess pairs for {n} rows"
                )
            tree, leaves = _grow_tree(X, presort, gh.grad, gh.hess, config, pool)
            for rows, w in leaves:
                preds[rows] += config.learning_rate * w
            trees.append(tree)
            if loss_history is not None:
                loss_history.append(float(objective.loss(preds)))
    finally:
        if pool is not None:
            pool.shutdown(wait=True)

    return GbdtModel(
        base_score=base,
        learning_rate=config.learning_rate,
        feature_count=X.shape[1],
        trees=tuple(trees),
    )
