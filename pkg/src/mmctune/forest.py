"""Extremely randomized tree ensemble for binary feasibility classification.

Every tree trains on the full sample (no bootstrap).  A node draws K
candidate attributes among those that still vary, one uniform cut-point per
attribute, and keeps the split with the largest impurity decrease; growth
stops only on purity, minimum node size or exhausted attributes.  The
ensemble votes; the score is the feasible-vote fraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

FEASIBLE = 1
INFEASIBLE = 0


class ForestError(ValueError):
    pass


@dataclass
class EtConfig:
    trees: int = 400
    k_attributes: int = 0  # 0 -> ceil(sqrt(n_attributes))
    min_split: int = 2
    seed: int = 0
    split_score: str = "gini"  # or "info_gain"

    def resolve_k(self, n_attributes: int) -> int:
        k = self.k_attributes if self.k_attributes > 0 else math.ceil(math.sqrt(n_attributes))
        return min(k, n_attributes)

    def validate(self, n_attributes: int) -> None:
        if self.trees < 1:
            raise ForestError(f"need at least one tree, got {self.trees}")
        if self.min_split < 2:
            raise ForestError(f"min_split must be >= 2, got {self.min_split}")
        if self.k_attributes < 0 or self.k_attributes > n_attributes:
            raise ForestError(f"k_attributes must lie in [0, {n_attributes}], got {self.k_attributes}")
        if self.split_score not in ("gini", "info_gain"):
            raise ForestError(f"unknown split score {self.split_score!r}")


@dataclass
class Node:
    """Internal node (attr >= 0) or leaf (attr == -1 with class counts)."""

    attr: int = -1
    cut: float = 0.0
    left: "Node | None" = None
    right: "Node | None" = None
    counts: tuple[int, int] | None = None  # (infeasible, feasible)

    @property
    def is_leaf(self) -> bool:
        return self.attr < 0


@dataclass
class TrainedForest:
    trees: list[Node]
    n_attributes: int
    config: EtConfig


def _impurity(counts: np.ndarray, kind: str) -> float:
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    if kind == "gini":
        return float(1.0 - np.sum(p * p))
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


def _grow(X: np.ndarray, y: np.ndarray, idx: np.ndarray, cfg: EtConfig, k: int,
          rng: np.random.Generator) -> Node:
    labels = y[idx]
    counts = (int(np.sum(labels == 0)), int(np.sum(labels == 1)))
    if counts[0] == 0 or counts[1] == 0 or idx.size < cfg.min_split:
        return Node(counts=counts)

    sub = X[idx]
    lo = sub.min(axis=0)
    hi = sub.max(axis=0)
    candidates = np.flatnonzero(hi > lo)
    if candidates.size == 0:
        return Node(counts=counts)

    n_draw = min(k, candidates.size)
    attrs = rng.choice(candidates, size=n_draw, replace=False)
    parent = _impurity(np.array(counts, dtype=float), cfg.split_score)
    best = None
    for attr in attrs:
        cut = rng.uniform(lo[attr], hi[attr])
        if not lo[attr] < cut < hi[attr]:
            cut = 0.5 * (lo[attr] + hi[attr])
        left = sub[:, attr] < cut
        nl = int(left.sum())
        nr = idx.size - nl
        cl = np.array([np.sum(labels[left] == 0), np.sum(labels[left] == 1)], dtype=float)
        cr = np.array(counts, dtype=float) - cl
        score = parent - (nl * _impurity(cl, cfg.split_score) + nr * _impurity(cr, cfg.split_score)) / idx.size
        if best is None or score > best[0]:
            best = (score, int(attr), float(cut), left)

    _, attr, cut, left = best
    node = Node(attr=attr, cut=cut)
    node.left = _grow(X, y, idx[left], cfg, k, rng)
    node.right = _grow(X, y, idx[~left], cfg, k, rng)
    return node


def fit(X, y, cfg: EtConfig) -> TrainedForest:
    """Grow the ensemble; deterministic given ``cfg.seed``.

    Per-tree generators are spawned from the seed so trees are independent
    streams and the forest is reproducible regardless of evaluation order.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int).ravel()
    if X.ndim != 2 or X.shape[0] == 0:
        raise ForestError("empty training set")
    if X.shape[0] != y.size:
        raise ForestError(f"{X.shape[0]} samples but {y.size} labels")
    if not np.all((y == 0) | (y == 1)):
        raise ForestError("labels must be 0 (infeasible) or 1 (feasible)")
    cfg.validate(X.shape[1])

    k = cfg.resolve_k(X.shape[1])
    streams = np.random.SeedSequence(cfg.seed).spawn(cfg.trees)
    idx = np.arange(X.shape[0])
    trees = [_grow(X, y, idx, cfg, k, np.random.default_rng(s)) for s in streams]
    return TrainedForest(trees=trees, n_attributes=X.shape[1], config=cfg)


def _tree_votes(node: Node, X: np.ndarray, idx: np.ndarray, out: np.ndarray) -> None:
    if node.is_leaf:
        c0, c1 = node.counts
        out[idx] = FEASIBLE if c1 > c0 else INFEASIBLE
        return
    left = X[idx, node.attr] < node.cut
    _tree_votes(node.left, X, idx[left], out)
    _tree_votes(node.right, X, idx[~left], out)


def score_many(forest: TrainedForest, X) -> np.ndarray:
    """Feasible-vote fraction per sample, in [0, 1]."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != forest.n_attributes:
        raise ForestError(f"expected {forest.n_attributes} attributes, got {X.shape[1]}")
    votes = np.zeros(X.shape[0])
    out = np.empty(X.shape[0], dtype=int)
    idx = np.arange(X.shape[0])
    for tree in forest.trees:
        _tree_votes(tree, X, idx, out)
        votes += out
    return votes / len(forest.trees)


def score(forest: TrainedForest, x) -> float:
    return float(score_many(forest, np.asarray(x))[0])


def predict_many(forest: TrainedForest, X) -> np.ndarray:
    """Majority vote; an exact half split falls to infeasible (the
    conservative class)."""
    return (score_many(forest, X) > 0.5).astype(int)


def predict(forest: TrainedForest, x) -> int:
    return int(predict_many(forest, np.asarray(x))[0])


# ---------------------------------------------------------------------------
# persistence


def forest_to_text(forest: TrainedForest) -> str:
    lines = [f"et-forest v1 m={len(forest.trees)} n_attr={forest.n_attributes}"]

    def emit(node: Node) -> None:
        if node.is_leaf:
            lines.append(f"L {node.counts[0]} {node.counts[1]}")
        else:
            lines.append(f"N {node.attr} {node.cut!r}")
            emit(node.left)
            emit(node.right)

    for tree in forest.trees:
        lines.append("T")
        emit(tree)
    return "\n".join(lines) + "\n"


def forest_from_text(text: str) -> TrainedForest:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("et-forest v1"):
        raise ForestError("not a v1 forest record")
    header = dict(tok.split("=") for tok in lines[0].split()[2:])
    m = int(header["m"])
    n_attr = int(header["n_attr"])

    pos = 1

    def parse() -> Node:
        nonlocal pos
        parts = lines[pos].split()
        pos += 1
        if parts[0] == "L":
            return Node(counts=(int(parts[1]), int(parts[2])))
        if parts[0] == "N":
            node = Node(attr=int(parts[1]), cut=float(parts[2]))
            node.left = parse()
            node.right = parse()
            return node
        raise ForestError(f"unexpected record line {parts[0]!r}")

    trees = []
    for _ in range(m):
        if pos >= len(lines) or lines[pos] != "T":
            raise ForestError("malformed forest record: missing tree marker")
        pos += 1
        trees.append(parse())
    return TrainedForest(trees=trees, n_attributes=n_attr, config=EtConfig())
