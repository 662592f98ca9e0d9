"""Random-forest regressor for the dynamism score, written from scratch.

Reproducibility scheme
----------------------
Training rows are first put in a canonical order (lexicographic on features,
then label), so the fitted forest does not depend on the order rows arrive
in. Each tree draws its bootstrap as per-row Poisson(1) multiplicities; a
row's count is seeded by a hash of the row's bytes together with the forest
seed and the tree index. Feature subsets of size ceil(sqrt(n_features)) are
drawn at every node from a per-tree generator that is consumed in a fixed
pre-order traversal.

Splits maximise weighted variance reduction; the threshold is the midpoint
between the two neighbouring distinct values. The split search runs in the
compiled kernel when available.

Model files are plain text::

    #dyncog-forest v1
    n_features <n> trees <k> max_depth <d> seed <s>
    tree <i> <node count>
    S <feature> <threshold>      (internal node, pre-order)
    L <value>                     (leaf)
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .. import kernels
from ..errors import EmptyTrainingSet, LayoutMismatch

logger = logging.getLogger(__name__)

MODEL_MAGIC = "#dyncog-forest v1"
DEFAULT_TREES = 100
DEFAULT_DEPTH = 12
MIN_GAIN = 1e-12


@dataclass
class Node:
    feature: int = -1
    threshold: float = 0.0
    value: float = 0.0
    left: "Node | None" = None
    right: "Node | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class ForestModel:
    trees: list[Node]
    n_features: int
    seed: int = 0
    max_depth: int = DEFAULT_DEPTH
    meta: dict = field(default_factory=dict)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict_raw(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise LayoutMismatch(f"model expects {self.n_features} features, got {X.shape[1]}")
        out = np.zeros(len(X))
        for tree in self.trees:
            out += np.array([_descend(tree, row) for row in X])
        return out / len(self.trees)

    def predict(self, X) -> np.ndarray:
        """Mean-of-trees prediction clamped to [0, 5]."""
        return np.clip(self.predict_raw(X), 0.0, 5.0)

    # persistence -----------------------------------------------------------

    def dumps(self) -> str:
        lines = [MODEL_MAGIC,
                 f"n_features {self.n_features} trees {self.n_trees} max_depth {self.max_depth} seed {self.seed}"]
        for i, tree in enumerate(self.trees):
            body = []
            _dump(tree, body)
            lines.append(f"tree {i} {len(body)}")
            lines.extend(body)
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "ForestModel":
        lines = text.splitlines()
        if not lines or lines[0] != MODEL_MAGIC:
            raise ValueError("not a dyncog forest model")
        head = lines[1].split()
        meta = dict(zip(head[::2], head[1::2]))
        n_features = int(meta["n_features"])
        trees = []
        pos = 2
        for _ in range(int(meta["trees"])):
            _, _, count = lines[pos].split()
            body = iter(lines[pos + 1: pos + 1 + int(count)])
            trees.append(_load(body, n_features))
            pos += 1 + int(count)
        return cls(trees, n_features, int(meta["seed"]), int(meta["max_depth"]))

    @classmethod
    def load(cls, path: str | Path) -> "ForestModel":
        return cls.loads(Path(path).read_text())


def _descend(node: Node, row: np.ndarray) -> float:
    while not node.is_leaf:
        node = node.left if row[node.feature] <= node.threshold else node.right
    return node.value


def _dump(node: Node, out: list[str]) -> None:
    if node.is_leaf:
        out.append(f"L {node.value!r}")
    else:
        out.append(f"S {node.feature} {node.threshold!r}")
        _dump(node.left, out)
        _dump(node.right, out)


def _load(lines, n_features: int) -> Node:
    parts = next(lines).split()
    if parts[0] == "L":
        return Node(value=float(parts[1]))
    feat = int(parts[1])
    if not 0 <= feat < n_features:
        raise ValueError(f"split feature {feat} out of range")
    node = Node(feature=feat, threshold=float(parts[2]))
    node.left = _load(lines, n_features)
    node.right = _load(lines, n_features)
    return node


# ---------------------------------------------------------------------------
# training


def _row_seed(row: np.ndarray, label: float, seed: int, tree: int) -> int:
    h = hashlib.blake2b(digest_size=8)
    h.update(np.ascontiguousarray(row, dtype="<f8").tobytes())
    h.update(np.float64(label).astype("<f8").tobytes())
    h.update(f"{seed}:{tree}".encode())
    return int.from_bytes(h.digest(), "little")


def bootstrap_counts(X: np.ndarray, y: np.ndarray, seed: int, tree: int) -> np.ndarray:
    counts = np.array([np.random.default_rng(_row_seed(X[i], y[i], seed, tree)).poisson(1.0)
                       for i in range(len(y))], dtype=float)
    if counts.sum() == 0:
        counts[:] = 1.0
    return counts


def canonical_order(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    keys = [y] + [X[:, j] for j in range(X.shape[1] - 1, -1, -1)]
    return np.lexsort(keys)


def _weighted_mean(y, w) -> float:
    return float(np.dot(w, y) / w.sum())


def _grow(X, y, w, depth: int, max_depth: int, m_try: int, rng: np.random.Generator,
          min_leaf_weight: float) -> Node:
    value = _weighted_mean(y, w)
    if depth >= max_depth or len(y) < 2 or np.all(y == y[0]):
        return Node(value=value)
    feats = np.sort(rng.choice(X.shape[1], size=m_try, replace=False))
    best = (MIN_GAIN, -1, 0.0)
    for f in feats:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        gain, i = kernels.best_split(xs, y[order], w[order])
        if i >= 0 and gain > best[0]:
            best = (gain, int(f), 0.5 * (xs[i] + xs[i + 1]))
    gain, f, thr = best
    if f < 0:
        return Node(value=value)
    go_left = X[:, f] <= thr
    if w[go_left].sum() < min_leaf_weight or w[~go_left].sum() < min_leaf_weight:
        return Node(value=value)
    node = Node(feature=f, threshold=float(thr), value=value)
    node.left = _grow(X[go_left], y[go_left], w[go_left], depth + 1, max_depth, m_try, rng, min_leaf_weight)
    node.right = _grow(X[~go_left], y[~go_left], w[~go_left], depth + 1, max_depth, m_try, rng, min_leaf_weight)
    return node


def train_forest(rows: Sequence[tuple[Sequence[float], float]] | None = None, trees: int = DEFAULT_TREES,
                 max_depth: int = DEFAULT_DEPTH, seed: int = 0, X=None, y=None,
                 min_leaf_weight: float = 1.0) -> ForestModel:
    """Fit a forest on ``rows`` of (feature vector, label in [0, 5]).

    Arrays may be given directly through ``X`` and ``y`` instead.
    """
    if rows is not None:
        rows = list(rows)
        if not rows:
            raise EmptyTrainingSet("no training rows")
        X = np.array([np.asarray(r[0], dtype=float) for r in rows])
        y = np.array([float(r[1]) for r in rows])
    if X is None or y is None or len(y) == 0:
        raise EmptyTrainingSet("no training rows")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if np.any((y < 0) | (y > 5)):
        raise ValueError("labels must lie in [0, 5]")
    if trees < 1 or max_depth < 0:
        raise ValueError("need at least one tree and a non-negative depth")

    order = canonical_order(X, y)
    X, y = X[order], y[order]
    n_features = X.shape[1]
    m_try = max(1, math.ceil(math.sqrt(n_features)))
    out = []
    for k in range(trees):
        w = bootstrap_counts(X, y, seed, k)
        keep = w > 0
        rng = np.random.default_rng([seed, k])
        out.append(_grow(X[keep], y[keep], w[keep], 0, max_depth, m_try, rng, min_leaf_weight))
    logger.debug("trained %d trees on %d rows x %d features", trees, len(y), n_features)
    return ForestModel(out, n_features, seed, max_depth, {"rows": len(y)})
