"""Random-forest regression trained on spectrum descriptors.

Plain CART regression trees under bagging: each tree sees a bootstrap
resample (optional) and each node searches a random subset of features for
the variance-minimizing threshold.  Samples with ``x[feature] <= threshold``
go left.  Predictions average the per-tree leaf means.

Everything is seeded: tree t draws its generator from ``(seed, t)``, so
training is reproducible run to run regardless of tree count.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

FOREST_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ForestParams:
    """Training settings.  ``max_depth`` of 0 means unlimited."""

    n_trees: int = 100
    max_depth: int = 0
    min_leaf: int = 1
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.max_depth < 0:
            raise ValueError(f"max_depth must be >= 0, got {self.max_depth}")
        if self.min_leaf < 1:
            raise ValueError(f"min_leaf must be >= 1, got {self.min_leaf}")


@dataclass(eq=False)
class _Tree:
    """Flat node arrays; ``feature`` is -1 at leaves and ``value`` holds the
    leaf mean.  Children always sit at higher indices than their parent."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray


@dataclass(eq=False)
class ForestModel:
    n_features: int
    params: ForestParams
    trees: list[_Tree]
    meta: dict = field(default_factory=dict)


def _best_split_on_feature(v, y, min_leaf):
    """Best threshold for one feature, or None.

    Returns (sse, threshold): the summed within-child squared error of the
    cheapest valid split.  Positions that would undercut min_leaf or split
    between equal values are not valid.
    """
    n = v.size
    order = np.argsort(v, kind="stable")
    vs = v[order]
    ys = y[order]
    cy = np.cumsum(ys)
    cy2 = np.cumsum(ys * ys)
    total_y = cy[-1]
    total_y2 = cy2[-1]
    i = np.arange(min_leaf - 1, n - min_leaf)
    if i.size == 0:
        return None
    gap = vs[i] != vs[i + 1]
    i = i[gap]
    if i.size == 0:
        return None
    nl = i + 1.0
    nr = n - nl
    sse = (cy2[i] - cy[i] ** 2 / nl) + ((total_y2 - cy2[i]) - (total_y - cy[i]) ** 2 / nr)
    k = int(np.argmin(sse))
    pos = int(i[k])
    t = 0.5 * (vs[pos] + vs[pos + 1])
    if t >= vs[pos + 1]:  # midpoint rounded up to the right value
        t = vs[pos]
    return float(sse[k]), t


def _find_split(X, y, feat_order, k, min_leaf):
    """Scan features in the given order; past the first ``k``, stop at the
    first feature that yields any valid split."""
    best = None
    for fi, f in enumerate(feat_order):
        if fi >= k and best is not None:
            break
        got = _best_split_on_feature(X[:, f], y, min_leaf)
        if got is None:
            continue
        sse, t = got
        if best is None or sse < best[0]:
            best = (sse, int(f), t)
        if fi >= k:
            break
    return best


def _grow_tree(X, y, params: ForestParams, rng) -> _Tree:
    n, n_features = X.shape
    k = max(1, int(np.sqrt(n_features)))
    feature = []
    threshold = []
    left = []
    right = []
    value = []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        ys = y[idx]
        value[node] = float(ys.mean())
        if idx.size < 2 * params.min_leaf:
            continue
        if params.max_depth and depth >= params.max_depth:
            continue
        if float(ys.min()) == float(ys.max()):
            continue
        feat_order = rng.permutation(n_features)
        best = _find_split(X[idx], ys, feat_order, k, params.min_leaf)
        if best is None:
            continue
        _sse, f, t = best
        mask = X[idx, f] <= t
        li = new_node()
        ri = new_node()
        feature[node] = f
        threshold[node] = t
        left[node] = li
        right[node] = ri
        stack.append((ri, idx[~mask], depth + 1))
        stack.append((li, idx[mask], depth + 1))
    return _Tree(
        feature=np.asarray(feature, dtype=np.int32),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        value=np.asarray(value, dtype=np.float64),
    )


def forest_train(X, y, params: ForestParams | None = None) -> ForestModel:
    """Fit a forest on rows ``X`` (n, features) against targets ``y`` (n,)."""
    if params is None:
        params = ForestParams()
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.size:
        raise ValueError(f"bad training shapes: X {X.shape}, y {y.shape}")
    n = X.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 training rows, got {n}")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("training data contains non-finite values")
    trees = []
    for t in range(params.n_trees):
        rng = np.random.default_rng(np.random.SeedSequence([params.seed, t]))
        if params.bootstrap:
            idx = rng.integers(0, n, n)
        else:
            idx = np.arange(n)
        trees.append(_grow_tree(X[idx], y[idx], params, rng))
    model = ForestModel(n_features=X.shape[1], params=params, trees=trees)
    preds = forest_predict_batch(model, X)
    model.meta = {
        "rows": int(n),
        "train_rmse": float(np.sqrt(np.mean((preds - y) ** 2))),
    }
    return model


def _tree_predict(tree: _Tree, x) -> float:
    i = 0
    while tree.feature[i] >= 0:
        if x[tree.feature[i]] <= tree.threshold[i]:
            i = tree.left[i]
        else:
            i = tree.right[i]
    return float(tree.value[i])


def forest_predict(model: ForestModel, x) -> float:
    """Mean of the per-tree predictions for one feature vector."""
    x = np.ascontiguousarray(x, dtype=np.float64).ravel()
    if x.size != model.n_features:
        raise ValueError(
            f"expected {model.n_features} features, got {x.size}"
        )
    return float(np.mean([_tree_predict(t, x) for t in model.trees]))


def forest_predict_batch(model: ForestModel, X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(
            f"expected (n, {model.n_features}) features, got shape {X.shape}"
        )
    return np.array([forest_predict(model, row) for row in X])


def _tree_to_nested(tree: _Tree):
    n = tree.feature.size
    nodes: list = [None] * n
    for i in range(n - 1, -1, -1):  # children live at higher indices
        if tree.feature[i] < 0:
            nodes[i] = {"value": float(tree.value[i])}
        else:
            nodes[i] = {
                "feature": int(tree.feature[i]),
                "threshold": float(tree.threshold[i]),
                "left": nodes[tree.left[i]],
                "right": nodes[tree.right[i]],
            }
    return nodes[0]


def _tree_from_nested(node) -> _Tree:
    feature = []
    threshold = []
    left = []
    right = []
    value = []

    def alloc():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    root = alloc()
    stack = [(node, root)]
    while stack:
        nd, slot = stack.pop()
        if not isinstance(nd, dict):
            raise ValueError("malformed tree node")
        if "value" in nd:
            value[slot] = float(nd["value"])
        else:
            feature[slot] = int(nd["feature"])
            threshold[slot] = float(nd["threshold"])
            li = alloc()
            ri = alloc()
            left[slot] = li
            right[slot] = ri
            stack.append((nd["right"], ri))
            stack.append((nd["left"], li))
    return _Tree(
        feature=np.asarray(feature, dtype=np.int32),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        value=np.asarray(value, dtype=np.float64),
    )


def save_forest(model: ForestModel, path: str | os.PathLike) -> None:
    """Write the forest as JSON with nested split/leaf nodes."""
    doc = {
        "format_version": FOREST_FORMAT_VERSION,
        "kind": "forest",
        "n_features": model.n_features,
        "params": {
            "n_trees": model.params.n_trees,
            "max_depth": model.params.max_depth,
            "min_leaf": model.params.min_leaf,
            "bootstrap": model.params.bootstrap,
            "seed": model.params.seed,
        },
        "meta": model.meta,
        "trees": [_tree_to_nested(t) for t in model.trees],
    }
    with open(path, "w", encoding="ascii") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_forest(path: str | os.PathLike) -> ForestModel:
    """Read a forest written by :func:`save_forest`."""
    with open(path, "r", encoding="ascii") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or doc.get("kind") != "forest":
        raise ValueError(f"not a forest model file: {path}")
    if doc.get("format_version") != FOREST_FORMAT_VERSION:
        raise ValueError(
            f"unsupported forest format version {doc.get('format_version')!r}: {path}"
        )
    try:
        params = ForestParams(**doc["params"])
        trees = [_tree_from_nested(nd) for nd in doc["trees"]]
        model = ForestModel(
            n_features=int(doc["n_features"]),
            params=params,
            trees=trees,
            meta=dict(doc.get("meta", {})),
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed forest file: {path}") from exc
    if not model.trees:
        raise ValueError(f"forest file has no trees: {path}")
    return model


def load_training_table(path: str | os.PathLike) -> tuple[np.ndarray, np.ndarray]:
    """Read a CSV of feature columns with the target in the last column.

    A first row that does not parse as numbers is treated as a header.
    Returns ``(X, y)``.
    """
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise ValueError(f"empty training table: {path}")
    start = 0
    first = lines[0].split(",")
    try:
        [float(c) for c in first]
    except ValueError:
        start = 1
    width = None
    for ln in lines[start:]:
        cells = ln.split(",")
        if width is None:
            width = len(cells)
            if width < 2:
                raise ValueError(f"training table needs >= 2 columns: {path}")
        elif len(cells) != width:
            raise ValueError(f"ragged row in training table: {path!r}: {ln!r}")
        try:
            rows.append([float(c) for c in cells])
        except ValueError as exc:
            raise ValueError(f"non-numeric cell in training table: {ln!r}") from exc
    if not rows:
        raise ValueError(f"training table has no data rows: {path}")
    arr = np.asarray(rows, dtype=np.float64)
    return arr[:, :-1], arr[:, -1]
