"""End-to-end segmentation: embed, cluster the embedding, learn the clusters back.

``segment`` runs the three stages; ``cluster_profiles`` summarizes each
cluster feature by feature.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .dataset import Dataset, standardize
from .dbscan import ClusterAssignment, DbscanConfig, cluster_embedding
from .forest import ForestConfig, ForestModel, train
from .tsne import Embedding, TsneConfig, embed

SUMMARY_FIELDS = ("min", "q1", "median", "q3", "max")


@dataclass(frozen=True)
class PipelineConfig:
    tsne: TsneConfig = field(default_factory=TsneConfig)
    dbscan: DbscanConfig = field(default_factory=DbscanConfig)
    forest: ForestConfig = field(default_factory=ForestConfig)
    standardize_input: bool = True

    def with_epsilon(self, c: float) -> "PipelineConfig":
        return replace(self, dbscan=replace(self.dbscan, epsilon_constant=c))

    def with_seed(self, seed: int) -> "PipelineConfig":
        """Derive every stage seed from one master seed."""
        tsne_seed, forest_seed = np.random.SeedSequence(seed).generate_state(2).tolist()
        return replace(
            self,
            tsne=replace(self.tsne, seed=int(tsne_seed)),
            forest=replace(self.forest, seed=int(forest_seed)),
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        return cls(
            tsne=TsneConfig(**d["tsne"]),
            dbscan=DbscanConfig(**d["dbscan"]),
            forest=ForestConfig(**d["forest"]),
            standardize_input=d["standardize_input"],
        )


@dataclass(frozen=True)
class ClusterProfileSet:
    """Per-cluster feature means and five-number summaries.

    ``summary[k, j]`` is ``(min, q1, median, q3, max)`` of feature j over cluster k.
    """

    labels: np.ndarray
    feature_names: tuple[str, ...]
    counts: np.ndarray
    means: np.ndarray
    summary: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("cluster", "feature", "count", "mean") + SUMMARY_FIELDS)
        for k, label in enumerate(self.labels):
            for j, name in enumerate(self.feature_names):
                w.writerow([int(label), name, int(self.counts[k]), repr(float(self.means[k, j]))]
                           + [repr(float(v)) for v in self.summary[k, j]])
        return buf.getvalue()


@dataclass(frozen=True)
class SegmentationResult:
    embedding: Embedding
    assignment: ClusterAssignment
    model: ForestModel
    profiles: ClusterProfileSet
    features: Dataset


def cluster_profiles(x: np.ndarray, names: Sequence[str], a: ClusterAssignment | np.ndarray) -> ClusterProfileSet:
    x = np.asarray(getattr(x, "values", x), dtype=float)
    labels = np.asarray(getattr(a, "labels", a), dtype=int)
    if len(labels) != x.shape[0]:
        raise ValueError(f"{len(labels)} labels for {x.shape[0]} rows")
    if len(names) != x.shape[1]:
        raise ValueError(f"{len(names)} names for {x.shape[1]} features")
    uniq = np.unique(labels)
    counts = np.empty(len(uniq), dtype=int)
    means = np.empty((len(uniq), x.shape[1]))
    summary = np.empty((len(uniq), x.shape[1], 5))
    for k, lab in enumerate(uniq):
        rows = x[labels == lab]
        counts[k] = len(rows)
        means[k] = rows.mean(axis=0)
        summary[k] = np.quantile(rows, [0.0, 0.25, 0.5, 0.75, 1.0], axis=0, method="linear").T
    return ClusterProfileSet(uniq, tuple(names), counts, means, summary)


def fit_stages(features: Dataset, emb: Embedding, cfg: PipelineConfig) -> SegmentationResult:
    """Cluster an existing embedding and fit the forest; lets callers reuse one embedding."""
    assignment = cluster_embedding(emb, cfg.dbscan)
    model = train(features.values, assignment, cfg.forest, features.feature_names)
    profiles = cluster_profiles(features.values, features.feature_names, assignment)
    return SegmentationResult(emb, assignment, model, profiles, features)


def model_features(d: Dataset, cfg: PipelineConfig) -> Dataset:
    return standardize(d) if cfg.standardize_input else d


def segment(d: Dataset, cfg: PipelineConfig | None = None) -> SegmentationResult:
    """Run standardize (optional), t-SNE, DBSCAN and the forest on ``d``.

    The forest and the profiles see the same matrix t-SNE saw.
    """
    cfg = cfg or PipelineConfig()
    if d.n_points < 4:
        raise ValueError("segmentation needs at least 4 rows")
    features = model_features(d, cfg)
    emb = embed(features, cfg.tsne)
    return fit_stages(features, emb, cfg)
