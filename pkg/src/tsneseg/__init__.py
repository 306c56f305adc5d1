"""Data segmentation with t-SNE, DBSCAN and random forests."""

__version__ = "0.1.0"

from .dataset import Dataset, FoldPlan, load_csv, split_folds, standardize
from .dbscan import ClusterAssignment, DbscanConfig, cluster_embedding
from .evalgen import GeneralizationReport, generalization_run, match_clusters, tune_epsilon, weighted_metrics
from .forest import ForestConfig, ForestModel, feature_importances, predict, train
from .pipeline import PipelineConfig, SegmentationResult, cluster_profiles, segment
from .tsne import Embedding, TsneConfig, embed

__all__ = [
    "ClusterAssignment",
    "Dataset",
    "DbscanConfig",
    "Embedding",
    "FoldPlan",
    "ForestConfig",
    "ForestModel",
    "GeneralizationReport",
    "PipelineConfig",
    "SegmentationResult",
    "TsneConfig",
    "cluster_embedding",
    "cluster_profiles",
    "embed",
    "feature_importances",
    "generalization_run",
    "load_csv",
    "match_clusters",
    "predict",
    "segment",
    "split_folds",
    "standardize",
    "train",
    "tune_epsilon",
    "weighted_metrics",
]
