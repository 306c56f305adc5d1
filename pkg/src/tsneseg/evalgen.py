"""How well do segments generalize to rows the pipeline never saw?

Ground truth for a row is the cluster it receives when the pipeline runs on
the whole dataset. Each cross-validation fold reruns the pipeline on its
training rows, matches the resulting clusters to the ground-truth clusters
(greedy, largest intersection first), labels the held-out rows with the fold's
forest and scores them against the ground truth.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .dataset import Dataset, split_folds
from .dbscan import cluster_embedding
from .forest import predict
from .pipeline import PipelineConfig, fit_stages, model_features
from .tsne import Embedding, embed

logger = logging.getLogger(__name__)

UNMATCHED = -1
DEFAULT_GRID = tuple(round(0.02 * i, 2) for i in range(1, 16))
INNER_FOLDS = 5


class NoValidEpsilonError(ValueError):
    """No constant in the grid yields the required number of clusters."""


@dataclass(frozen=True)
class MatchingPermutation:
    best_perm: tuple[int, ...]

    def translate(self, train_labels: np.ndarray) -> np.ndarray:
        lookup = np.asarray(self.best_perm, dtype=int)
        return lookup[np.asarray(train_labels, dtype=int)]

    @property
    def n_unmatched(self) -> int:
        return sum(1 for v in self.best_perm if v == UNMATCHED)


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision_weighted: float
    recall_weighted: float
    f1_weighted: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.accuracy, self.precision_weighted, self.recall_weighted, self.f1_weighted)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class FoldResult:
    fold: int
    metrics: Metrics
    matching: MatchingPermutation
    n_train_clusters: int
    n_full_clusters: int
    epsilon_constant: float
    n_train: int
    n_test: int

    def to_dict(self) -> dict:
        return {
            "fold": self.fold,
            "metrics": self.metrics.to_dict(),
            "best_perm": list(self.matching.best_perm),
            "n_unmatched": self.matching.n_unmatched,
            "n_train_clusters": self.n_train_clusters,
            "n_full_clusters": self.n_full_clusters,
            "epsilon_constant": self.epsilon_constant,
            "n_train": self.n_train,
            "n_test": self.n_test,
        }


@dataclass(frozen=True)
class GeneralizationReport:
    per_fold: list[FoldResult]
    mean_weighted: Metrics
    epsilon_constants_used: list[float]
    full_epsilon_constant: float
    fixed_epsilon: bool
    k: int
    seed: int

    def summary_row(self, name: str = "data") -> str:
        return " & ".join([name] + [f"{v:.3f}" for v in self.mean_weighted.as_tuple()])

    def to_dict(self, name: str = "data") -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "epsilon_mode": "fixed epsilon" if self.fixed_epsilon else "nested cross-validation",
            "full_epsilon_constant": self.full_epsilon_constant,
            "epsilon_constants_used": list(self.epsilon_constants_used),
            "unmatched_label": UNMATCHED,
            "per_fold": [f.to_dict() for f in self.per_fold],
            "mean_weighted": self.mean_weighted.to_dict(),
            "summary_header": "Data Set & Accuracy & Precision & Recall & F1-Score",
            "summary_row": self.summary_row(name),
        }


@dataclass(frozen=True)
class TuningRow:
    epsilon_constant: float
    n_clusters: int
    n_non_singleton: int
    admissible: bool
    mean_f1: float | None
    fold_f1: tuple[float, ...] = ()


@dataclass(frozen=True)
class TuningResult:
    rows: list[TuningRow]
    best: float | None
    min_clusters: int

    def to_dict(self) -> dict:
        return {
            "min_clusters": self.min_clusters,
            "chosen_epsilon_constant": self.best,
            "grid": [asdict(r) | {"fold_f1": list(r.fold_f1)} for r in self.rows],
        }


def match_clusters(train_clusters: Sequence[Iterable[int]], full_clusters: Sequence[Iterable[int]]) -> MatchingPermutation:
    """Greedily pair each training cluster with an unused full-data cluster.

    Training clusters are visited in label order (largest first). Each takes
    the not-yet-used full-data cluster with the largest positive intersection;
    equal intersections go to the smaller full-data label. A cluster that
    overlaps no remaining candidate stays ``UNMATCHED``.
    """
    full_sets = [set(int(i) for i in c) for c in full_clusters]
    used: set[int] = set()
    perm = []
    for cluster in train_clusters:
        members = set(int(i) for i in cluster)
        best_sum, best_idx = 0, UNMATCHED
        for idx, other in enumerate(full_sets):
            if idx in used:
                continue
            overlap = len(members & other)
            if overlap > best_sum:
                best_sum, best_idx = overlap, idx
        if best_idx != UNMATCHED:
            used.add(best_idx)
        perm.append(best_idx)
    return MatchingPermutation(tuple(perm))


def weighted_metrics(y_true: Sequence[int], y_pred: Sequence[int]) -> Metrics:
    """Accuracy plus precision, recall and F1 averaged over true classes weighted by support.

    Per-class scores with a zero denominator count as 0. Predicted labels absent
    from ``y_true`` (such as ``UNMATCHED``) carry zero weight but still cost recall.
    """
    t = np.asarray(y_true)
    p = np.asarray(y_pred)
    if t.shape != p.shape:
        raise ValueError(f"length mismatch: {t.size} true vs {p.size} predicted labels")
    if t.size == 0:
        raise ValueError("no labels to score")
    classes, support = np.unique(t, return_counts=True)
    precision = np.zeros(len(classes))
    recall = np.zeros(len(classes))
    f1 = np.zeros(len(classes))
    for k, c in enumerate(classes):
        tp = np.count_nonzero((t == c) & (p == c))
        n_pred = np.count_nonzero(p == c)
        precision[k] = tp / n_pred if n_pred else 0.0
        recall[k] = tp / support[k]
        denom = precision[k] + recall[k]
        f1[k] = 2 * precision[k] * recall[k] / denom if denom else 0.0
    w = support / t.size
    return Metrics(
        accuracy=float(np.mean(t == p)),
        precision_weighted=float(np.dot(w, precision)),
        recall_weighted=float(np.dot(w, recall)),
        f1_weighted=float(np.dot(w, f1)),
    )


def mean_metrics(ms: Sequence[Metrics]) -> Metrics:
    arr = np.array([m.as_tuple() for m in ms])
    return Metrics(*(float(v) for v in arr.mean(axis=0)))


class _Context:
    """Model-space features plus a cache of embeddings keyed by row subset."""

    def __init__(self, features: Dataset, cfg: PipelineConfig):
        self.features = features
        self.cfg = replace(cfg, standardize_input=False)
        self._embeddings: dict[bytes, Embedding] = {}

    def embedding(self, rows: np.ndarray) -> Embedding:
        key = np.asarray(rows, dtype=np.int64).tobytes()
        if key not in self._embeddings:
            self._embeddings[key] = embed(self.features.values[rows], self.cfg.tsne)
        return self._embeddings[key]

    def score_split(self, train_rows: np.ndarray, test_rows: np.ndarray, truth: np.ndarray, c: float):
        """Segment ``train_rows``, match to ``truth`` and score ``test_rows``.

        ``truth`` holds ground-truth labels for every row in the context.
        """
        cfg = self.cfg.with_epsilon(c)
        res = fit_stages(self.features.subset(train_rows), self.embedding(train_rows), cfg)
        truth_train = truth[train_rows]
        n_full = int(truth.max()) + 1
        full_clusters = [np.flatnonzero(truth_train == k) for k in range(n_full)]
        matching = match_clusters(res.assignment.members(), full_clusters)
        pred = matching.translate(predict(res.model, self.features.values[test_rows]))
        return weighted_metrics(truth[test_rows], pred), matching, res.assignment.n_clusters, n_full

    def tune(self, rows: np.ndarray, grid: Sequence[float], min_clusters: int, seed: int) -> TuningResult:
        if len(grid) == 0:
            raise ValueError("empty epsilon grid")
        rows = np.asarray(rows)
        full_emb = self.embedding(rows)
        plan = split_folds(len(rows), INNER_FOLDS, seed)
        table = []
        for c in grid:
            a = cluster_embedding(full_emb, self.cfg.with_epsilon(c).dbscan)
            admissible = a.n_non_singleton() >= min_clusters
            if not admissible:
                table.append(TuningRow(float(c), a.n_clusters, a.n_non_singleton(), False, None))
                continue
            # ground truth for the inner folds: positions within ``rows``
            truth = np.full(len(self.features.values), -1)
            truth[rows] = a.labels
            f1s = []
            for fold in range(plan.k):
                tr, te = rows[plan.train_indices(fold)], rows[plan.test_indices(fold)]
                metrics = self.score_split(tr, te, truth, c)[0]
                f1s.append(metrics.f1_weighted)
            table.append(TuningRow(float(c), a.n_clusters, a.n_non_singleton(), True,
                                   float(np.mean(f1s)), tuple(f1s)))
            logger.debug("c=%.4g clusters=%d mean F1=%.4f", c, a.n_clusters, np.mean(f1s))
        valid = [r for r in table if r.admissible]
        best = min(valid, key=lambda r: (-r.mean_f1, r.epsilon_constant)).epsilon_constant if valid else None
        return TuningResult(table, best, min_clusters)


def _sub_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])


def tuning_table(train: Dataset, grid: Sequence[float], cfg: PipelineConfig | None = None,
                 min_clusters: int = 1, seed: int = 0) -> TuningResult:
    """Score every constant in ``grid`` by inner 5-fold cross-validation on ``train``."""
    cfg = cfg or PipelineConfig()
    ctx = _Context(model_features(train, cfg), cfg)
    return ctx.tune(np.arange(train.n_points), grid, min_clusters, seed)


def tune_epsilon(train: Dataset, grid: Sequence[float], cfg: PipelineConfig | None = None,
                 min_clusters: int = 1, seed: int = 0) -> float:
    """Best constant by mean inner weighted F1; ties go to the smaller constant.

    Raises ``NoValidEpsilonError`` when no constant yields ``min_clusters``
    non-singleton clusters on the whole of ``train``.
    """
    result = tuning_table(train, grid, cfg, min_clusters, seed)
    if result.best is None:
        raise NoValidEpsilonError(
            f"no epsilon constant in {list(grid)} gives >= {min_clusters} non-singleton clusters; widen the grid"
        )
    return result.best


def generalization_run(d: Dataset, cfg: PipelineConfig | None = None, k: int = 5,
                       grid: Sequence[float] | None = None, min_clusters: int | None = None,
                       seed: int = 0) -> GeneralizationReport:
    """k-fold generalization estimate of the whole pipeline.

    With a one-element grid that constant is used everywhere and no inner
    tuning happens. Otherwise the ground-truth run and every fold tune their
    constant by nested cross-validation.
    """
    cfg = cfg or PipelineConfig()
    grid = list(grid) if grid is not None else [cfg.dbscan.epsilon_constant]
    if not grid:
        raise ValueError("empty epsilon grid")
    min_clusters = cfg.dbscan.min_clusters if min_clusters is None else min_clusters
    ctx = _Context(model_features(d, cfg), cfg)
    n = d.n_points
    plan = split_folds(n, k, seed)
    fixed = len(grid) == 1
    everything = np.arange(n)

    def choose(rows, tag):
        if fixed:
            return float(grid[0])
        res = ctx.tune(rows, grid, min_clusters, _sub_seed(seed, tag))
        if res.best is None:
            raise NoValidEpsilonError(
                f"no epsilon constant in {grid} gives >= {min_clusters} non-singleton clusters"
                f" on {len(rows)} rows; widen the grid"
            )
        return res.best

    c_full = choose(everything, 0)
    truth = cluster_embedding(ctx.embedding(everything), ctx.cfg.with_epsilon(c_full).dbscan).labels
    logger.info("ground truth: c=%.4g, %d clusters", c_full, int(truth.max()) + 1)

    folds = []
    for fold in range(k):
        tr, te = plan.train_indices(fold), plan.test_indices(fold)
        c = choose(tr, fold + 1)
        metrics, matching, n_train_clusters, n_full = ctx.score_split(tr, te, truth, c)
        logger.info("fold %d: c=%.4g F1=%.4f", fold, c, metrics.f1_weighted)
        folds.append(FoldResult(fold, metrics, matching, n_train_clusters, n_full, c, len(tr), len(te)))
    return GeneralizationReport(
        per_fold=folds,
        mean_weighted=mean_metrics([f.metrics for f in folds]),
        epsilon_constants_used=[f.epsilon_constant for f in folds],
        full_epsilon_constant=c_full,
        fixed_epsilon=fixed,
        k=k,
        seed=seed,
    )
