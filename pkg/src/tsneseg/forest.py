"""Random Forest classifier (CART trees, Gini criterion) with impurity importances.

Trees are stored as flat arrays. Every source of randomness is a per-tree
generator seeded with ``seed + tree_index``, so training order does not matter.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

MODEL_FORMAT = "tsneseg-forest"
MODEL_VERSION = 1
LEAF = -1
_TIE_TOL = 1e-12


def gini_impurity(class_counts: Sequence[float] | np.ndarray) -> float:
    counts = np.asarray(class_counts, dtype=float)
    total = counts.sum()
    if total <= 0:
        raise ValueError("gini impurity of an empty node")
    frac = counts / total
    return float(1.0 - np.dot(frac, frac))


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_features: str | int = "sqrt"
    min_samples_leaf: int = 1
    max_depth: int | None = None
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if isinstance(self.max_features, str):
            if self.max_features not in ("sqrt", "all"):
                raise ValueError(f"max_features must be 'sqrt', 'all' or an integer, not {self.max_features!r}")
        elif self.max_features < 1:
            raise ValueError("integer max_features must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0 or None")

    def n_candidates(self, n_features: int) -> int:
        if self.max_features == "sqrt":
            return max(1, int(math.sqrt(n_features)))
        if self.max_features == "all":
            return n_features
        if self.max_features > n_features:
            raise ValueError(f"max_features={self.max_features} exceeds {n_features} features")
        return int(self.max_features)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Tree:
    """One fitted tree. ``value[i]`` holds the (bootstrap-weighted) class counts of node i."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    importances: np.ndarray  # raw impurity decrease per feature, weighted by node fraction

    @property
    def node_count(self) -> int:
        return len(self.feature)

    def apply(self, x: np.ndarray) -> np.ndarray:
        node = np.zeros(x.shape[0], dtype=int)
        active = np.flatnonzero(self.feature[node] != LEAF)
        while active.size:
            cur = node[active]
            go_left = x[active, self.feature[cur]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = active[self.feature[node[active]] != LEAF]
        return node

    def predict_index(self, x: np.ndarray) -> np.ndarray:
        # argmax picks the smallest class index on ties
        return np.argmax(self.value[self.apply(x)], axis=1)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "importances": self.importances.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            feature=np.asarray(d["feature"], dtype=int),
            threshold=np.asarray(d["threshold"], dtype=float),
            left=np.asarray(d["left"], dtype=int),
            right=np.asarray(d["right"], dtype=int),
            value=np.asarray(d["value"], dtype=float).reshape(len(d["feature"]), -1),
            importances=np.asarray(d["importances"], dtype=float),
        )


@dataclass
class ForestModel:
    trees: list[Tree]
    classes: np.ndarray
    importances: np.ndarray
    feature_names: tuple[str, ...]
    config: ForestConfig
    oob_available: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def n_features(self) -> int:
        return len(self.importances)


def _best_split(x_node: np.ndarray, y_node: np.ndarray, class_totals: np.ndarray,
                candidates: np.ndarray, n_wanted: int, min_leaf: int):
    """Evaluate the first ``n_wanted`` non-constant features in ``candidates`` order.

    Returns (child_impurity, feature, threshold) or None. Ties on impurity go to
    the lower feature index, then the lower threshold.
    """
    m = len(y_node)
    nonconst = x_node.min(axis=0) < x_node.max(axis=0)
    feats = candidates[nonconst[candidates]][:n_wanted]
    if feats.size == 0:
        return None
    cols = x_node[:, feats]
    lane = np.arange(feats.size)
    order = np.argsort(cols, axis=0, kind="stable")
    xs = cols[order, lane]
    ys = y_node[order]
    pos = np.arange(m)[:, None]
    # occurrence rank of each sample within its class along the sorted column
    by_class = np.argsort(ys * m + pos, axis=0)
    grouped = ys[by_class, lane]
    starts = np.empty(grouped.shape, dtype=bool)
    starts[0] = True
    np.not_equal(grouped[1:], grouped[:-1], out=starts[1:])
    first = np.maximum.accumulate(np.where(starts, pos, 0), axis=0)
    occ = np.empty_like(ys)
    occ[by_class, lane] = pos - first
    # running sum of squared class counts on the left, and the matching right-hand sum
    sq_left = np.cumsum(2 * occ + 1, axis=0)[:-1].astype(float)
    cross = np.cumsum(class_totals[ys], axis=0)[:-1].astype(float)
    sq_right = float(np.dot(class_totals, class_totals)) - 2.0 * cross + sq_left
    n_left = np.arange(1, m, dtype=float)[:, None]
    n_right = m - n_left
    child = (n_left - sq_left / n_left + n_right - sq_right / n_right) / m
    valid = xs[:-1] < xs[1:]
    if min_leaf > 1:
        valid &= (n_left >= min_leaf) & (n_right >= min_leaf)
    child = np.where(valid, child, np.inf)
    col_best = child.min(axis=0)
    best_imp = col_best.min()
    if not np.isfinite(best_imp):
        return None
    # impurities equal up to rounding count as ties
    cutoff = best_imp + _TIE_TOL
    j = min(np.flatnonzero(col_best <= cutoff), key=lambda c: feats[c])
    i = int(np.argmax(child[:, j] <= cutoff))
    best_imp = float(child[i, j])
    thr = 0.5 * (xs[i, j] + xs[i + 1, j])
    if thr == xs[i + 1, j]:
        thr = xs[i, j]
    return float(best_imp), int(feats[j]), float(thr)


def _grow_tree(x: np.ndarray, y: np.ndarray, n_classes: int, cfg: ForestConfig, rng: np.random.Generator) -> Tree:
    n, n_features = x.shape
    n_wanted = cfg.n_candidates(n_features)
    max_depth = np.inf if cfg.max_depth is None else cfg.max_depth
    feature, threshold, left, right, value = [], [], [], [], []
    importances = np.zeros(n_features)

    def new_node(idx):
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(np.bincount(y[idx], minlength=n_classes).astype(float))
        return len(feature) - 1

    stack = [(new_node(np.arange(n)), np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        counts = value[node]
        m = len(idx)
        if depth >= max_depth or m < 2 * cfg.min_samples_leaf or np.count_nonzero(counts) <= 1:
            continue
        candidates = rng.permutation(n_features)
        split = _best_split(x[idx], y[idx], counts.astype(np.int64), candidates, n_wanted, cfg.min_samples_leaf)
        if split is None:
            continue
        child_imp, f, thr = split
        parent_imp = gini_impurity(counts)
        importances[f] += (m / n) * (parent_imp - child_imp)
        mask = x[idx, f] <= thr
        feature[node], threshold[node] = f, thr
        li, ri = idx[mask], idx[~mask]
        left[node] = new_node(li)
        right[node] = new_node(ri)
        # right pushed first so the left subtree is expanded first
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return Tree(
        feature=np.asarray(feature, dtype=int),
        threshold=np.asarray(threshold, dtype=float),
        left=np.asarray(left, dtype=int),
        right=np.asarray(right, dtype=int),
        value=np.asarray(value, dtype=float).reshape(len(feature), n_classes),
        importances=importances,
    )


def _labels_array(labels) -> np.ndarray:
    return np.asarray(getattr(labels, "labels", labels), dtype=int)


def train(x: np.ndarray, labels, cfg: ForestConfig | None = None,
          feature_names: Sequence[str] | None = None) -> ForestModel:
    """Fit ``cfg.n_trees`` Gini trees mapping rows of ``x`` to ``labels``.

    ``labels`` may be a ``ClusterAssignment`` or any integer sequence.
    Importances are mean decrease in impurity, averaged over trees and
    normalized to one (all zero when no tree ever split).
    """
    cfg = cfg or ForestConfig()
    x = np.asarray(getattr(x, "values", x), dtype=float)
    y_raw = _labels_array(labels)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("training data is empty")
    if len(y_raw) != x.shape[0]:
        raise ValueError(f"{len(y_raw)} labels for {x.shape[0]} rows")
    n, n_features = x.shape
    cfg.n_candidates(n_features)
    classes, y = np.unique(y_raw, return_inverse=True)
    trees = []
    for t in range(cfg.n_trees):
        rng = np.random.default_rng(cfg.seed + t)
        rows = rng.integers(0, n, size=n) if cfg.bootstrap else np.arange(n)
        trees.append(_grow_tree(x[rows], y[rows], len(classes), cfg, rng))
    total = np.mean([tr.importances for tr in trees], axis=0)
    s = total.sum()
    importances = total / s if s > 0 else np.zeros(n_features)
    names = tuple(feature_names) if feature_names is not None else tuple(f"f{j}" for j in range(n_features))
    if len(names) != n_features:
        raise ValueError(f"{len(names)} feature names for {n_features} features")
    return ForestModel(trees, classes, importances, names, cfg, oob_available=cfg.bootstrap)


def predict(m: ForestModel, x: np.ndarray) -> np.ndarray:
    """Majority vote of the trees; equal votes resolve to the smaller label."""
    x = np.asarray(getattr(x, "values", x), dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != m.n_features:
        raise ValueError(f"model expects {m.n_features} columns, got {x.shape[1]}")
    votes = np.zeros((x.shape[0], len(m.classes)), dtype=int)
    rows = np.arange(x.shape[0])
    for tree in m.trees:
        np.add.at(votes, (rows, tree.predict_index(x)), 1)
    return m.classes[np.argmax(votes, axis=1)]


def feature_importances(m: ForestModel) -> list[tuple[str, float]]:
    order = sorted(range(m.n_features), key=lambda j: (-m.importances[j], j))
    return [(m.feature_names[j], float(m.importances[j])) for j in order]


def model_to_dict(m: ForestModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "config": m.config.to_dict(),
        "classes": m.classes.tolist(),
        "feature_names": list(m.feature_names),
        "importances": m.importances.tolist(),
        "oob_available": m.oob_available,
        "trees": [t.to_dict() for t in m.trees],
    }


def model_from_dict(d: dict) -> ForestModel:
    if d.get("format") != MODEL_FORMAT:
        raise ValueError("not a forest model file")
    if d.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {d.get('version')}")
    return ForestModel(
        trees=[Tree.from_dict(t) for t in d["trees"]],
        classes=np.asarray(d["classes"], dtype=int),
        importances=np.asarray(d["importances"], dtype=float),
        feature_names=tuple(d["feature_names"]),
        config=ForestConfig(**d["config"]),
        oob_available=bool(d["oob_available"]),
    )


def save_model(m: ForestModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(m), separators=(",", ":")), encoding="utf-8")


def load_model(path: str | Path) -> ForestModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
