"""Random forests grown from scratch: Gini CART trees, bagging, votes,
margins, Gini importance and out-of-bag error; plus a 1-NN error estimate.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

FOREST_FORMAT = "tacoma-forest-v1"
TREE_GRID = (50, 100, 200, 500)
MTRY_GRID = {"0.5sqrt": 0.5, "sqrt": 1.0, "2sqrt": 2.0}


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        X = np.ascontiguousarray(self.features, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] < 1:
            raise ValueError("features must be an (n >= 1, p) matrix")
        y = np.asarray(self.labels, dtype=np.int32)
        if y.shape != (X.shape[0],):
            raise ValueError("need exactly one label per row")
        if self.class_count < 1 or y.min() < 0 or y.max() >= self.class_count:
            raise ValueError(f"labels must lie in [0, {self.class_count - 1}]")
        self.features = X
        self.labels = y

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def subset(self, rows=None, cols=None) -> "Dataset":
        X = self.features
        if rows is not None:
            X = X[np.asarray(rows)]
        if cols is not None:
            X = X[:, np.asarray(cols)]
        y = self.labels if rows is None else self.labels[np.asarray(rows)]
        return Dataset(X, y, self.class_count)


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    mtry: int | None = None  # None -> round(sqrt(p))
    seed: int = 0

    def resolve_mtry(self, p: int) -> int:
        m = default_mtry(p) if self.mtry is None else int(self.mtry)
        if not 1 <= m <= p:
            raise ValueError(f"mtry must be in [1, {p}], got {m}")
        return m


def default_mtry(p: int, factor: float = 1.0) -> int:
    return min(max(1, int(math.floor(factor * math.sqrt(p) + 0.5))), p)


def mtry_from_name(name: str, p: int) -> int:
    try:
        return default_mtry(p, MTRY_GRID[name])
    except KeyError:
        raise ValueError(f"mtry must be one of {sorted(MTRY_GRID)} or an integer") from None


def gini(p) -> float:
    """Gini impurity 1 - sum(p_i^2) of a class-proportion vector."""
    p = np.asarray(p, dtype=float)
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("gini expects a probability vector")
    return float(np.sum(p * (1.0 - p)))


def tree_seed(master_seed: int, tree_index: int) -> int:
    """Per-tree sub-stream seed; independent of worker scheduling."""
    return int(np.random.SeedSequence([master_seed, tree_index]).generate_state(1)[0])


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    hist: np.ndarray  # per-node class counts of in-bag rows

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def leaf_class(self) -> np.ndarray:
        # argmax picks the smallest index on ties
        return np.argmax(self.hist, axis=1).astype(np.int32)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "hist": self.hist.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            np.asarray(d["feature"], dtype=np.int32),
            np.asarray(d["threshold"], dtype=np.float64),
            np.asarray(d["left"], dtype=np.int32),
            np.asarray(d["right"], dtype=np.int32),
            np.asarray(d["hist"], dtype=np.int32).reshape(len(d["feature"]), -1),
        )


def grow_tree(data: Dataset, in_bag, mtry: int, seed: int) -> tuple[Tree, np.ndarray]:
    """Grow one fully expanded CART tree; returns the tree and its importance vector."""
    in_bag = np.ascontiguousarray(in_bag, dtype=np.int64)
    if in_bag.size == 0:
        raise ValueError("in-bag sample is empty")
    if in_bag.min() < 0 or in_bag.max() >= data.n:
        raise ValueError("in-bag row index out of range")
    if not 1 <= mtry <= data.p:
        raise ValueError(f"mtry must be in [1, {data.p}]")
    f, t, l, r, h, imp = _kernels.grow_tree(
        np.ascontiguousarray(data.features.T), data.labels, data.class_count, in_bag, int(mtry), int(seed)
    )
    return Tree(f, t, l, r, h), imp


@dataclass(eq=False)
class Forest:
    """Trees packed end to end; tree ``t`` occupies nodes ``roots[t]:roots[t+1]``.

    Child links stay local to each tree.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    hist: np.ndarray
    roots: np.ndarray
    params: ForestParams
    mtry: int
    n_features: int
    class_count: int
    in_bag_counts: np.ndarray | None  # (n_trees, n_train)
    importances: np.ndarray
    leaf_class: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        # argmax picks the smallest index on ties
        self.leaf_class = np.argmax(self.hist, axis=1).astype(np.int32)

    @classmethod
    def from_trees(cls, trees: list[Tree], **kw) -> "Forest":
        roots = np.cumsum([0] + [t.n_nodes for t in trees])[:-1].astype(np.int64)
        cat = lambda name, dt: np.ascontiguousarray(np.concatenate([getattr(t, name) for t in trees]), dtype=dt)  # noqa: E731
        return cls(
            cat("feature", np.int32),
            cat("threshold", np.float64),
            cat("left", np.int32),
            cat("right", np.int32),
            cat("hist", np.int32),
            roots,
            **kw,
        )

    @property
    def n_trees(self) -> int:
        return len(self.roots)

    @property
    def trees(self) -> list[Tree]:
        bounds = list(self.roots) + [len(self.feature)]
        return [
            Tree(self.feature[a:b], self.threshold[a:b], self.left[a:b], self.right[a:b], self.hist[a:b])
            for a, b in zip(bounds[:-1], bounds[1:])
        ]

    def _packed(self):
        return self.feature, self.threshold, self.left, self.right, self.leaf_class, self.roots

    def _check(self, X) -> np.ndarray:
        X = np.atleast_2d(np.ascontiguousarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return X

    def votes(self, X) -> np.ndarray:
        """Per-class vote tallies, shape (n_rows, C)."""
        X = self._check(X)
        return _kernels.tally_votes(X, *self._packed(), self.class_count)

    def tree_predictions(self, X) -> np.ndarray:
        X = self._check(X)
        return _kernels.leaf_classes(X, *self._packed())

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.votes(X), axis=1)

    def margins(self, X) -> np.ndarray:
        return margins(self.votes(X))

    def to_dict(self, include_bootstrap: bool = True) -> dict:
        doc = {
            "format": FOREST_FORMAT,
            "params": {"n_trees": self.params.n_trees, "mtry": self.mtry, "seed": self.params.seed},
            "n_features": self.n_features,
            "class_count": self.class_count,
            "importances": self.importances.tolist(),
            "trees": [t.to_dict() for t in self.trees],
        }
        if include_bootstrap and self.in_bag_counts is not None:
            doc["in_bag_counts"] = self.in_bag_counts.tolist()
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":")) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "Forest":
        if doc.get("format") != FOREST_FORMAT:
            raise ValueError(f"not a {FOREST_FORMAT} document")
        prm = doc["params"]
        bag = doc.get("in_bag_counts")
        trees = [Tree.from_dict(t) for t in doc["trees"]]
        if not trees:
            raise ValueError("forest document has no trees")
        return cls.from_trees(
            trees,
            params=ForestParams(prm["n_trees"], prm["mtry"], prm["seed"]),
            mtry=prm["mtry"],
            n_features=doc["n_features"],
            class_count=doc["class_count"],
            in_bag_counts=None if bag is None else np.asarray(bag, dtype=np.int32),
            importances=np.asarray(doc["importances"], dtype=np.float64),
        )

    @classmethod
    def from_json(cls, text: str) -> "Forest":
        return cls.from_dict(json.loads(text))


def train_forest(data: Dataset, params: ForestParams = ForestParams(), n_jobs: int = 1) -> Forest:
    """Bagged ensemble of unpruned CART trees.

    Tree ``t`` draws its bootstrap sample and split features from a stream
    seeded by ``(params.seed, t)``, so the result does not depend on
    ``n_jobs``.
    """
    if params.n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    mtry = params.resolve_mtry(data.p)
    XT = np.ascontiguousarray(data.features.T)
    seeds = np.array([tree_seed(params.seed, t) for t in range(params.n_trees)], dtype=np.int64)

    def build(chunk: np.ndarray):
        return _kernels.grow_trees(XT, data.labels, data.class_count, mtry, chunk)

    chunks = np.array_split(seeds, max(1, min(n_jobs, params.n_trees)))
    if len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            built = list(pool.map(build, chunks))
    else:
        built = [build(chunks[0])]

    counts = np.concatenate([b[5] for b in built])
    roots = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64)
    # sum per-tree importances in tree order so the total is bit-identical for any n_jobs
    per_tree = np.concatenate([b[7] for b in built])
    importances = np.zeros(data.p)
    for row in per_tree:
        importances += row
    return Forest(
        np.concatenate([b[0] for b in built]),
        np.concatenate([b[1] for b in built]),
        np.concatenate([b[2] for b in built]),
        np.concatenate([b[3] for b in built]),
        np.concatenate([b[4] for b in built]),
        roots,
        params=params,
        mtry=mtry,
        n_features=data.p,
        class_count=data.class_count,
        in_bag_counts=np.concatenate([b[6] for b in built]),
        importances=importances,
    )


def predict_votes(forest: Forest, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("x must be a single feature vector")
    return forest.votes(x[None, :])[0]


def predict_class(forest: Forest, x) -> int:
    return int(np.argmax(predict_votes(forest, x)))


def margin(tally) -> int:
    """Largest vote count minus the second largest."""
    v = np.sort(np.asarray(tally))
    if v.size < 2:
        raise ValueError("margin needs at least two classes")
    return int(v[-1] - v[-2])


def margins(votes: np.ndarray) -> np.ndarray:
    part = np.sort(votes, axis=1)
    return part[:, -1] - part[:, -2]


@dataclass(frozen=True)
class OobResult:
    error: float
    evaluated: int
    skipped: int


def oob_error(forest: Forest, data: Dataset) -> OobResult:
    """Error of the out-of-bag majority vote, over rows with >= 1 oob tree."""
    if forest.in_bag_counts is None:
        raise ValueError("forest carries no bootstrap records")
    if forest.in_bag_counts.shape[1] != data.n:
        raise ValueError("dataset does not match the forest's training set size")
    pred = forest.tree_predictions(data.features)  # (T, n)
    oob = forest.in_bag_counts == 0
    votes = np.zeros((data.n, forest.class_count), dtype=np.int64)
    for c in range(forest.class_count):
        votes[:, c] = np.sum((pred == c) & oob, axis=0)
    has_oob = oob.any(axis=0)
    wrong = np.argmax(votes, axis=1) != data.labels
    evaluated = int(has_oob.sum())
    err = float(wrong[has_oob].mean()) if evaluated else float("nan")
    return OobResult(err, evaluated, data.n - evaluated)


def importance_ranking(forest: Forest) -> list[tuple[int, float]]:
    """Features by descending Gini importance; ties by ascending index."""
    imp = forest.importances
    order = np.lexsort((np.arange(imp.size), -imp))
    return [(int(i), float(imp[i])) for i in order]


def accuracy(forest: Forest, data: Dataset) -> float:
    return float(np.mean(forest.predict(data.features) == data.labels))


def nn1_predict(train: Dataset, X: np.ndarray) -> np.ndarray:
    if train.n == 0:
        raise ValueError("empty training set")
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] != train.p:
        raise ValueError("feature dimensions differ")
    out = np.empty(X.shape[0], dtype=np.int32)
    chunk = max(1, 4_000_000 // max(1, train.n * train.p))
    for s in range(0, X.shape[0], chunk):
        block = X[s : s + chunk]
        d = ((block[:, None, :] - train.features[None, :, :]) ** 2).sum(axis=2)
        out[s : s + chunk] = train.labels[np.argmin(d, axis=1)]
    return out


def nn1_error(train: Dataset, test: Dataset) -> float:
    """Euclidean 1-NN test error; equal distances go to the lower train index."""
    return float(np.mean(nn1_predict(train, test.features) != test.labels))
