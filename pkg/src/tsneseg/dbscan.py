"""Density-based clustering of a 2-D embedding.

The neighborhood radius is a multiple of the embedding's mean pairwise distance,
which makes one constant transferable between embeddings of different scale.
"""

from __future__ import annotations

from collections import deque
from dataclasses import asdict, dataclass

import numpy as np

from .tsne import Embedding, pairwise_sq_distances

NOISE = -1


@dataclass(frozen=True)
class DbscanConfig:
    epsilon_constant: float = 0.1
    min_pts: int = 4
    min_clusters: int = 1
    noise_as_single_cluster: bool = False

    def __post_init__(self):
        if not self.epsilon_constant > 0:
            raise ValueError("epsilon_constant must be positive")
        if self.min_pts < 1:
            raise ValueError("min_pts must be >= 1")
        if self.min_clusters < 1:
            raise ValueError("min_clusters must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray
    cluster_sizes: tuple[int, ...]
    epsilon_used: float

    @property
    def n_points(self) -> int:
        return len(self.labels)

    @property
    def n_clusters(self) -> int:
        return len(self.cluster_sizes)

    def n_non_singleton(self) -> int:
        return sum(1 for s in self.cluster_sizes if s > 1)

    def members(self) -> list[np.ndarray]:
        """Row indices of each cluster, indexed by label."""
        order = np.argsort(self.labels, kind="stable")
        bounds = np.cumsum((0,) + self.cluster_sizes)
        return [order[bounds[k] : bounds[k + 1]] for k in range(self.n_clusters)]


def mean_pairwise_distance(coords: np.ndarray) -> float:
    d = np.sqrt(pairwise_sq_distances(coords))
    n = d.shape[0]
    return float(d[np.triu_indices(n, k=1)].mean())


def epsilon_from_constant(e: Embedding | np.ndarray, c: float) -> float:
    coords = e.coords if isinstance(e, Embedding) else np.asarray(e, dtype=float)
    if coords.shape[0] < 2:
        raise ValueError("need at least two points for a mean pairwise distance")
    if not c > 0:
        raise ValueError("epsilon constant must be positive")
    return c * mean_pairwise_distance(coords)


def dbscan_raw(coords: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """Plain DBSCAN; returns cluster ids in discovery order, ``NOISE`` for noise.

    A point is core when its closed eps-ball, itself included, holds at least
    ``min_pts`` points. Border points join the first cluster that reaches them
    while scanning seeds in index order.
    """
    neighbors = pairwise_sq_distances(coords) <= eps * eps
    n = neighbors.shape[0]
    core = neighbors.sum(axis=1) >= min_pts
    labels = np.full(n, NOISE, dtype=int)
    cluster = 0
    for seed in range(n):
        if labels[seed] != NOISE or not core[seed]:
            continue
        labels[seed] = cluster
        queue = deque([seed])
        while queue:
            p = queue.popleft()
            if not core[p]:
                continue
            fresh = np.flatnonzero(neighbors[p] & (labels == NOISE))
            labels[fresh] = cluster
            queue.extend(fresh.tolist())
        cluster += 1
    return labels


def finalize_assignment(raw_labels: np.ndarray, eps: float = float("nan"),
                        noise_as_single_cluster: bool = False) -> ClusterAssignment:
    """Relabel clusters by descending size so that cluster 0 is the largest.

    Noise points become singleton clusters (or one shared cluster when
    ``noise_as_single_cluster``). Equal sizes are ordered by smallest member index.
    """
    raw = np.asarray(raw_labels, dtype=int)
    groups: list[np.ndarray] = []
    for lab in np.unique(raw[raw != NOISE]):
        groups.append(np.flatnonzero(raw == lab))
    noise = np.flatnonzero(raw == NOISE)
    if noise_as_single_cluster:
        if noise.size:
            groups.append(noise)
    else:
        groups.extend(noise[:, None])
    groups.sort(key=lambda g: (-len(g), int(g[0])))
    labels = np.empty(len(raw), dtype=int)
    for k, g in enumerate(groups):
        labels[g] = k
    labels.setflags(write=False)
    return ClusterAssignment(labels, tuple(len(g) for g in groups), float(eps))


def cluster_embedding(e: Embedding | np.ndarray, cfg: DbscanConfig | None = None) -> ClusterAssignment:
    cfg = cfg or DbscanConfig()
    coords = e.coords if isinstance(e, Embedding) else np.asarray(e, dtype=float)
    eps = epsilon_from_constant(coords, cfg.epsilon_constant)
    raw = dbscan_raw(coords, eps, cfg.min_pts)
    return finalize_assignment(raw, eps, cfg.noise_as_single_cluster)
