"""Margin-based co-training and self-training with random forests.

Feature splits are either *natural* (one block of features per spatial
relationship) or obtained by *thinning*: a random partition of the
feature indices into J slices of near-equal size.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .forest import Dataset, Forest, ForestParams, train_forest


@dataclass(frozen=True)
class FeatureSplit:
    subsets: tuple[np.ndarray, ...]
    scheme: str
    seed: object = None

    def __post_init__(self):
        seen: set[int] = set()
        for s in self.subsets:
            s = set(int(i) for i in s)
            if seen & s:
                raise ValueError("feature subsets overlap")
            seen |= s

    @property
    def parts(self) -> int:
        return len(self.subsets)

    def pick(self, i: int = 0, j: int = 1) -> "FeatureSplit":
        return FeatureSplit((self.subsets[i], self.subsets[j]), self.scheme, self.seed)


def thin_split(p: int, parts: int, seed) -> FeatureSplit:
    """Uniformly random partition of range(p) into ``parts`` slices (sizes differ by <= 1)."""
    if not 2 <= parts <= p:
        raise ValueError(f"number of slices must be in [2, {p}], got {parts}")
    perm = np.random.default_rng(seed).permutation(p)
    slices = tuple(np.sort(s) for s in np.array_split(perm, parts))
    return FeatureSplit(slices, "thinning", seed)


def natural_split(blocks: Sequence[tuple[int, int]]) -> FeatureSplit:
    """One subset per contiguous ``[start, stop)`` relationship block."""
    if len(blocks) < 2:
        raise ValueError("a natural split needs at least two blocks")
    return FeatureSplit(tuple(np.arange(a, b) for a, b in blocks), "natural")


def sample_labeled(labels: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Random subset of ``n`` row indices containing every class present in ``labels``."""
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if n < len(classes):
        raise ValueError("cannot cover every class with so few labeled rows")
    first = np.array([rng.choice(np.flatnonzero(labels == c)) for c in classes])
    rest = np.setdiff1d(np.arange(len(labels)), first)
    extra = rng.choice(rest, size=n - len(first), replace=False)
    return np.sort(np.concatenate([first, extra]))


def top_margin_rows(margins: np.ndarray, candidates: np.ndarray, m: int) -> np.ndarray:
    """Positions (into ``candidates``) of the m largest margins; ties go to smaller row ids."""
    order = np.lexsort((candidates, -margins))
    return order[:m]


@dataclass
class Transfer:
    row: int
    label: int
    margin: int
    classifier: int


@dataclass
class RoundLog:
    round: int
    unlabeled_before: int
    transfers: list[Transfer] = field(default_factory=list)
    collisions: int = 0

    def as_dict(self) -> dict:
        return {
            "round": self.round,
            "unlabeled_before": self.unlabeled_before,
            "collisions": self.collisions,
            "transfers": [t.__dict__ for t in self.transfers],
        }


@dataclass
class SemiSupervisedResult:
    classifier: Forest
    columns: np.ndarray
    labels: np.ndarray  # final classifier's predictions on U0
    transferred: np.ndarray  # label assigned when each U0 row left the pool
    log: list[RoundLog]

    def predict(self, X) -> np.ndarray:
        return self.classifier.predict(np.asarray(X)[:, self.columns])

    def error(self, truth) -> float:
        return float(np.mean(self.labels != np.asarray(truth)))


def _params(base: ForestParams, seed) -> ForestParams:
    s = int(np.random.SeedSequence(seed).generate_state(1)[0])
    return ForestParams(base.n_trees, base.mtry, s)


def _loop(L0: Dataset, U0, views, ms, params: ForestParams, seed: int) -> SemiSupervisedResult:
    U0 = np.asarray(U0, dtype=np.float64).reshape(-1, L0.p)
    X_all = np.vstack([L0.features, U0])
    n0 = L0.n
    y_all = np.concatenate([L0.labels, np.full(len(U0), -1, dtype=np.int32)])
    view_X = [np.ascontiguousarray(X_all[:, cols]) for cols in views]
    labeled = list(range(n0))
    pool = np.arange(len(U0))
    log: list[RoundLog] = []
    rnd = 0
    while pool.size:
        entry = RoundLog(rnd, int(pool.size))
        chosen: dict[int, int] = {}
        rows = np.asarray(labeled)
        for k, (Xk, m) in enumerate(zip(view_X, ms)):
            fk = train_forest(
                Dataset(Xk[rows], y_all[rows], L0.class_count), _params(params, [seed, rnd, k])
            )
            votes = fk.votes(Xk[n0 + pool])
            marg = votes.max(axis=1) - np.sort(votes, axis=1)[:, -2]
            for pos in top_margin_rows(marg, pool, m):
                r = int(pool[pos])
                if r in chosen:
                    entry.collisions += 1
                    continue
                chosen[r] = int(np.argmax(votes[pos]))
                entry.transfers.append(Transfer(r, chosen[r], int(marg[pos]), k + 1))
        for r, lab in chosen.items():
            y_all[n0 + r] = lab
            labeled.append(n0 + r)
        pool = np.setdiff1d(pool, list(chosen))
        log.append(entry)
        rnd += 1

    rows = np.asarray(labeled)
    final = train_forest(
        Dataset(view_X[0][rows], y_all[rows], L0.class_count), _params(params, [seed, rnd, 0])
    )
    preds = final.predict(view_X[0][n0:]) if len(U0) else np.zeros(0, dtype=np.int64)
    return SemiSupervisedResult(final, np.asarray(views[0]), preds, y_all[n0:].copy(), log)


def cotrain(
    L0: Dataset,
    U0,
    split: FeatureSplit,
    params: ForestParams = ForestParams(n_trees=50),
    m1: int = 2,
    m2: int = 2,
    seed: int = 0,
) -> SemiSupervisedResult:
    """Two forests over disjoint feature views label their most confident rows for each other.

    Each round both forests are trained on the current labeled pool; each
    moves its ``m_k`` largest-margin unlabeled rows (with its predicted
    label) into the pool. A row picked by both keeps the first forest's
    label. The returned classifier is the first view's forest retrained on
    the final pool.
    """
    if split.parts != 2:
        raise ValueError("co-training consumes exactly two feature subsets; use split.pick()")
    if m1 < 1 or m2 < 1:
        raise ValueError("transfer sizes must be >= 1")
    return _loop(L0, U0, split.subsets, (m1, m2), params, seed)


def self_train(
    L0: Dataset,
    U0,
    params: ForestParams = ForestParams(n_trees=50),
    m: int = 4,
    seed: int = 0,
    columns=None,
) -> SemiSupervisedResult:
    """Single-forest label -> transfer -> label loop over all (or the given) features."""
    if m < 1:
        raise ValueError("transfer size must be >= 1")
    cols = np.arange(L0.p) if columns is None else np.asarray(columns)
    return _loop(L0, U0, (cols,), (m,), params, seed)
