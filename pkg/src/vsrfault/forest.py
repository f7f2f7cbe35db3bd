"""CART classification trees and a bagging random forest, built on numpy.

Trees split on Gini impurity with ``feature <= threshold`` going left. Each
tree is trained on a bootstrap resample with its own generator derived from
``(seed, tree_index)``, so a forest does not depend on how many worker
threads built it.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .labels import N_CLASSES

FORMAT_MAGIC = "vsr-forest"
FORMAT_VERSION = 1
FEATURE_KINDS = ("texture", "raw")

# Impurities closer than this are treated as tied.
TIE_TOL = 1e-12


class ModelFormatError(ValueError):
    """Raised when a model file cannot be parsed."""


@dataclass(frozen=True)
class TrainParams:
    n_trees: int = 200
    m_features: int | None = None
    min_leaf: int = 1
    max_depth: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.m_features is not None and self.m_features < 1:
            raise ValueError("m_features must be >= 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")

    def resolve(self, dim: int) -> TrainParams:
        """Fill in ``m_features`` (ceil(sqrt(dim)) by default) and check it fits."""
        m = self.m_features if self.m_features is not None else math.ceil(math.sqrt(dim))
        if not 1 <= m <= dim:
            raise ValueError(f"m_features={m} must lie in [1, {dim}]")
        return replace(self, m_features=m)


class Split(NamedTuple):
    feature: int
    threshold: float
    impurity: float


def gini(counts) -> float:
    c = np.asarray(counts, dtype=float)
    n = c.sum()
    if n < 1:
        raise ValueError("gini of an empty histogram")
    return float(1.0 - np.sum((c / n) ** 2))


def _feature_scores(x, onehot, total, min_leaf):
    """Weighted child Gini for every split position of one feature.

    Returns (sorted values, scores) where ``scores[i]`` is the impurity of
    splitting between sorted positions i and i+1, or inf if not allowed.
    """
    n = x.shape[0]
    order = np.argsort(x, kind="stable")
    xs = x[order]
    left = np.cumsum(onehot[order], axis=0)[:-1]
    right = total - left
    n_left = np.arange(1, n, dtype=float)
    n_right = n - n_left
    purity = (left * left).sum(axis=1) / n_left + (right * right).sum(axis=1) / n_right
    scores = 1.0 - purity / n
    ok = (xs[:-1] < xs[1:]) & (n_left >= min_leaf) & (n_right >= min_leaf)
    return xs, np.where(ok, scores, np.inf)


def _midpoint(a: float, b: float) -> float:
    mid = (a + b) / 2.0
    if not np.isfinite(mid):
        mid = a / 2.0 + b / 2.0
    # a <= mid < b must hold so that `<=` routes a left and b right
    if not a <= mid < b:
        mid = a
    return float(mid)


def best_split(
    X,
    y,
    candidate_features: Sequence[int],
    min_leaf: int = 1,
    n_classes: int = N_CLASSES,
) -> Split | None:
    """Best Gini split over ``candidate_features``, or None if nothing helps.

    Thresholds are midpoints between consecutive distinct values. Ties go to
    the lowest feature index, then the lowest threshold.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.intp)
    n = y.shape[0]
    if n < 2:
        return None
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = 1.0
    total = onehot.sum(axis=0)
    parent = 1.0 - float((total * total).sum()) / (n * n)

    results = []
    for f in sorted(int(f) for f in candidate_features):
        xs, scores = _feature_scores(X[:, f], onehot, total, min_leaf)
        results.append((f, xs, scores))
    best = min((float(s.min()) for _, _, s in results), default=np.inf)
    if not np.isfinite(best) or best >= parent - TIE_TOL:
        return None
    for f, xs, scores in results:
        hits = np.flatnonzero(scores <= best + TIE_TOL)
        if hits.size:
            i = int(hits[0])
            return Split(f, _midpoint(float(xs[i]), float(xs[i + 1])), float(scores[i]))
    return None  # unreachable


def bootstrap(n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ValueError("bootstrap needs n >= 1")
    return rng.integers(0, n, size=n)


@dataclass
class DecisionTree:
    """Node arena in pre-order; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] < 0

    def depth(self) -> int:
        best = 0
        stack = [(0, 0)]
        while stack:
            node, d = stack.pop()
            best = max(best, d)
            if not self.is_leaf(node):
                stack.append((int(self.left[node]), d + 1))
                stack.append((int(self.right[node]), d + 1))
        return best

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by every row of ``X``."""
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=np.intp)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            nd = node[active]
            go_left = X[active, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] >= 0]
        return node

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.counts[self.apply(X)], axis=1)

    def predict_proba(self, X) -> np.ndarray:
        c = self.counts[self.apply(X)]
        return c / c.sum(axis=1, keepdims=True)

    def to_lines(self) -> list[str]:
        lines = []
        for i in range(self.n_nodes):
            if self.is_leaf(i):
                lines.append("L " + " ".join(str(int(v)) for v in self.counts[i]))
            else:
                lines.append(f"I {int(self.feature[i])} {float(self.threshold[i])!r}")
        return lines

    @classmethod
    def from_nodes(cls, nodes: Sequence[tuple]) -> DecisionTree:
        """Build from pre-order nodes: ``("I", feature, threshold)`` or ``("L", counts)``."""
        n = len(nodes)
        feature = np.full(n, -1, dtype=np.intp)
        threshold = np.zeros(n)
        left = np.full(n, -1, dtype=np.intp)
        right = np.full(n, -1, dtype=np.intp)
        counts = np.zeros((n, N_CLASSES), dtype=np.int64)
        # stack of internal nodes still waiting for a right child
        pending: list[int] = []
        for i, node in enumerate(nodes):
            if i > 0:
                if not pending:
                    raise ModelFormatError("pre-order node list has trailing nodes")
                parent = pending[-1]
                if left[parent] < 0:
                    left[parent] = i
                else:
                    right[parent] = i
                    pending.pop()
            if node[0] == "I":
                feature[i] = int(node[1])
                threshold[i] = float(node[2])
                if feature[i] < 0:
                    raise ModelFormatError(f"negative feature index {node[1]}")
                pending.append(i)
            elif node[0] == "L":
                c = np.asarray(node[1], dtype=np.int64)
                if c.shape != (N_CLASSES,) or c.min() < 0 or c.sum() < 1:
                    raise ModelFormatError(f"bad leaf histogram {node[1]}")
                counts[i] = c
            else:
                raise ModelFormatError(f"unknown node kind {node[0]!r}")
        if pending or n == 0:
            raise ModelFormatError("incomplete pre-order node list")
        return cls(feature, threshold, left, right, counts)

    def structurally_equal(self, other: DecisionTree) -> bool:
        return self.to_lines() == other.to_lines()


def train_tree(X, y, params: TrainParams, rng: np.random.Generator) -> DecisionTree:
    """Grow one CART tree on ``(X, y)`` as given (no resampling here)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.intp)
    if y.shape[0] == 0:
        raise ValueError("cannot train a tree on an empty sample")
    dim = X.shape[1]
    params = params.resolve(dim)
    m = params.m_features

    feature, threshold, left, right, counts = [], [], [], [], []
    # (row indices, depth, parent node, is_left); popping left before right
    # allocates nodes in pre-order
    stack = [(np.arange(y.shape[0]), 0, -1, False)]
    while stack:
        rows, depth, parent, is_left = stack.pop()
        node = len(feature)
        if parent >= 0:
            (left if is_left else right)[parent] = node
        hist = np.bincount(y[rows], minlength=N_CLASSES)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(hist)

        n = rows.shape[0]
        if (
            np.count_nonzero(hist) <= 1
            or n < 2 * params.min_leaf
            or (params.max_depth is not None and depth >= params.max_depth)
        ):
            continue
        cand = rng.choice(dim, size=m, replace=False)
        split = best_split(X[rows], y[rows], cand, params.min_leaf)
        if split is None:
            continue
        feature[node] = split.feature
        threshold[node] = split.threshold
        counts[node] = np.zeros(N_CLASSES, dtype=np.int64)
        go_left = X[rows, split.feature] <= split.threshold
        stack.append((rows[~go_left], depth + 1, node, False))
        stack.append((rows[go_left], depth + 1, node, True))

    return DecisionTree(
        np.array(feature, dtype=np.intp),
        np.array(threshold, dtype=float),
        np.array(left, dtype=np.intp),
        np.array(right, dtype=np.intp),
        np.array(counts, dtype=np.int64),
    )


def tree_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


@dataclass
class ForestModel:
    trees: list[DecisionTree]
    params: TrainParams
    feature_kind: str
    dim: int
    version: int = FORMAT_VERSION

    def __post_init__(self):
        if self.feature_kind not in FEATURE_KINDS:
            raise ValueError(f"unknown feature kind {self.feature_kind!r}")
        if len(self.trees) != self.params.n_trees:
            raise ValueError(
                f"forest has {len(self.trees)} trees but params say {self.params.n_trees}"
            )
        for t in self.trees:
            internal = t.feature[t.feature >= 0]
            if internal.size and internal.max() >= self.dim:
                raise ValueError("tree splits on a feature beyond the model dimension")

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def prefix(self, k: int) -> ForestModel:
        """The forest made of the first ``k`` trees."""
        if not 1 <= k <= self.n_trees:
            raise ValueError(f"prefix size {k} outside [1, {self.n_trees}]")
        return ForestModel(
            self.trees[:k], replace(self.params, n_trees=k), self.feature_kind, self.dim
        )

    def dumps(self) -> str:
        p = self.params
        depth = "none" if p.max_depth is None else str(p.max_depth)
        lines = [
            f"{FORMAT_MAGIC} v{self.version} {self.feature_kind} {self.dim} "
            f"{self.n_trees} {p.seed}",
            f"# params m_features={p.m_features} min_leaf={p.min_leaf} max_depth={depth}",
        ]
        for t in self.trees:
            lines.extend(t.to_lines())
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(self.dumps())

    @classmethod
    def loads(cls, text: str) -> ForestModel:
        return _parse_model(text.splitlines())

    @classmethod
    def load(cls, path) -> ForestModel:
        with open(path, encoding="ascii") as fh:
            return _parse_model(fh.read().splitlines())


def _parse_model(lines: list[str]) -> ForestModel:
    if not lines:
        raise ModelFormatError("line 1: empty model file")
    head = lines[0].split()
    if len(head) != 6 or head[0] != FORMAT_MAGIC:
        raise ModelFormatError(f"line 1: bad header {lines[0]!r}")
    if head[1] != f"v{FORMAT_VERSION}":
        raise ModelFormatError(f"line 1: unsupported version {head[1]}")
    kind = head[2]
    try:
        dim, n_trees, seed = int(head[3]), int(head[4]), int(head[5])
    except ValueError:
        raise ModelFormatError(f"line 1: bad header {lines[0]!r}") from None

    extra: dict[str, int | None] = {}
    body = []
    for lineno, line in enumerate(lines[1:], start=2):
        if line.startswith("# params"):
            for item in line[len("# params"):].split():
                key, _, val = item.partition("=")
                extra[key] = None if val == "none" else int(val)
        elif line.startswith("#") or not line.strip():
            continue
        else:
            body.append((lineno, line))

    trees = []
    pos = 0
    for t in range(n_trees):
        nodes = []
        need = 1
        while need:
            if pos >= len(body):
                raise ModelFormatError(f"unexpected end of file in tree {t}")
            lineno, line = body[pos]
            pos += 1
            parts = line.split()
            try:
                if parts[0] == "I" and len(parts) == 3:
                    nodes.append(("I", int(parts[1]), float(parts[2])))
                    need += 1
                elif parts[0] == "L" and len(parts) == N_CLASSES + 1:
                    nodes.append(("L", [int(v) for v in parts[1:]]))
                    need -= 1
                else:
                    raise ValueError(f"malformed node {line!r}")
            except (ValueError, IndexError) as exc:
                raise ModelFormatError(f"line {lineno}: {exc}") from None
        try:
            trees.append(DecisionTree.from_nodes(nodes))
        except ModelFormatError as exc:
            raise ModelFormatError(f"tree {t}: {exc}") from None
    if pos != len(body):
        raise ModelFormatError(f"line {body[pos][0]}: trailing data after {n_trees} trees")
    params = TrainParams(
        n_trees=n_trees,
        m_features=extra.get("m_features"),
        min_leaf=extra.get("min_leaf") or 1,
        max_depth=extra.get("max_depth"),
        seed=seed,
    )
    try:
        return ForestModel(trees, params, kind, dim)
    except ValueError as exc:
        raise ModelFormatError(str(exc)) from None


def train_forest(
    X, y, params: TrainParams, feature_kind: str = "texture", threads: int = 1
) -> ForestModel:
    """Bagging forest: tree j sees a bootstrap drawn from ``tree_rng(seed, j)``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.intp)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[0] != y.shape[0]:
        raise ValueError("need a nonempty 2-D feature matrix with one label per row")
    params = params.resolve(X.shape[1])

    def build(j: int) -> DecisionTree:
        rng = tree_rng(params.seed, j)
        idx = bootstrap(X.shape[0], rng)
        return train_tree(X[idx], y[idx], params, rng)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trees = list(pool.map(build, range(params.n_trees)))
    else:
        trees = [build(j) for j in range(params.n_trees)]
    return ForestModel(trees, params, feature_kind, X.shape[1])


def _check_dim(model: ForestModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.dim:
        raise ValueError(f"expected {model.dim} features, got shape {X.shape}")
    return X


def predict_votes(model: ForestModel, X) -> np.ndarray:
    """Per-row vote counts over the ten classes (each row sums to n_trees)."""
    X = _check_dim(model, X)
    votes = np.zeros((X.shape[0], N_CLASSES), dtype=np.int64)
    rows = np.arange(X.shape[0])
    for t in model.trees:
        np.add.at(votes, (rows, t.predict(X)), 1)
    return votes


def predict(model: ForestModel, X) -> np.ndarray:
    # argmax returns the first maximum, i.e. the lowest class id on ties
    return np.argmax(predict_votes(model, X), axis=1)


def predict_class(model: ForestModel, features) -> tuple[int, np.ndarray]:
    features = np.asarray(features, dtype=float)
    if features.ndim != 1:
        raise ValueError("predict_class takes a single feature vector")
    votes = predict_votes(model, features)[0]
    return int(np.argmax(votes)), votes


def predict_proba(model: ForestModel, X) -> np.ndarray:
    X = _check_dim(model, X)
    proba = np.zeros((X.shape[0], N_CLASSES))
    for t in model.trees:
        proba += t.predict_proba(X)
    return proba / model.n_trees


def brier(proba, y) -> float:
    proba = np.asarray(proba, dtype=float)
    truth = np.zeros_like(proba)
    truth[np.arange(proba.shape[0]), np.asarray(y, dtype=np.intp)] = 1.0
    return float(np.mean(np.sum((proba - truth) ** 2, axis=1)))


@dataclass
class EnsembleErrorReport:
    tree_brier: np.ndarray
    mean_tree_brier: float
    ensemble_brier: float
    accuracy_curve: np.ndarray = field(repr=False)

    @property
    def jensen_gap(self) -> float:
        return self.mean_tree_brier - self.ensemble_brier


def ensemble_error_report(model: ForestModel, X, y) -> EnsembleErrorReport:
    """Brier scores of every tree and of the averaged forest.

    ``accuracy_curve[k-1]`` is the vote accuracy of the first ``k`` trees.
    """
    X = _check_dim(model, X)
    y = np.asarray(y, dtype=np.intp)
    if y.shape[0] == 0:
        raise ValueError("empty test set")
    rows = np.arange(X.shape[0])
    avg = np.zeros((X.shape[0], N_CLASSES))
    votes = np.zeros((X.shape[0], N_CLASSES), dtype=np.int64)
    tree_scores = np.empty(model.n_trees)
    curve = np.empty(model.n_trees)
    for j, t in enumerate(model.trees):
        p = t.predict_proba(X)
        tree_scores[j] = brier(p, y)
        avg += p
        np.add.at(votes, (rows, np.argmax(p, axis=1)), 1)
        curve[j] = float(np.mean(np.argmax(votes, axis=1) == y))
    avg /= model.n_trees
    return EnsembleErrorReport(
        tree_scores, float(tree_scores.mean()), brier(avg, y), curve
    )
