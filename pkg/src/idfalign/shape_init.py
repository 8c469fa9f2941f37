"""Clustering of box-normalized training shapes and selection of
representative initialization shapes.

Shapes are clustered as flat 2l-dimensional vectors with plain Euclidean
distance (no appearance features, no Procrustes pre-alignment). Selected
initializations are always actual training shapes, never synthetic centroids.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import BoundingBox, normalize_to_box


@dataclass(eq=False)
class ShapeCluster:
    centroid: np.ndarray  # (landmarks, 2) normalized frame
    member_indices: np.ndarray  # indices into the training set


@dataclass(eq=False)
class InitSet:
    shapes: np.ndarray  # (count, landmarks, 2) normalized frame
    cluster_ids: np.ndarray  # (count,) source cluster per shape

    def __len__(self) -> int:
        return self.shapes.shape[0]


def _flatten(shapes: np.ndarray) -> np.ndarray:
    return shapes.reshape(shapes.shape[0], -1)


def _kmeans_pp_seed(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    dist_sq = np.sum((points - centroids[0]) ** 2, axis=1)
    for i in range(1, k):
        total = dist_sq.sum()
        if total <= 0:
            centroids[i] = points[rng.integers(n)]
            continue
        centroids[i] = points[rng.choice(n, p=dist_sq / total)]
        dist_sq = np.minimum(dist_sq, np.sum((points - centroids[i]) ** 2, axis=1))
    return centroids


def kmeans_shapes(
    shapes,
    k: int,
    max_iters: int = 100,
    rng: np.random.Generator | None = None,
) -> list[ShapeCluster]:
    """Lloyd's algorithm with k-means++ seeding on flattened shape vectors.

    Empty clusters are reseeded to the point currently farthest from its own
    centroid. The within-cluster squared-distance objective is checked to be
    non-increasing every iteration.
    """
    shapes = np.asarray(shapes, dtype=np.float64)
    if shapes.ndim != 3 or shapes.shape[2] != 2:
        raise ValueError(f"shapes must be (n, landmarks, 2), got {shapes.shape}")
    n = shapes.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < k:
        raise ValueError(f"cannot form {k} clusters from {n} shapes")
    if rng is None:
        rng = np.random.default_rng(0)

    points = _flatten(shapes)
    centroids = _kmeans_pp_seed(points, k, rng)
    labels = np.full(n, -1)
    prev_objective = np.inf
    for _ in range(max_iters):
        dist_sq = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_labels = dist_sq.argmin(axis=1)
        objective = float(dist_sq[np.arange(n), new_labels].sum())
        assert objective <= prev_objective * (1 + 1e-9) + 1e-12, "k-means objective increased"
        prev_objective = objective
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            members = labels == c
            if members.any():
                centroids[c] = points[members].mean(axis=0)
            else:
                per_point = ((points - centroids[labels]) ** 2).sum(axis=1)
                runaway = int(per_point.argmax())
                centroids[c] = points[runaway]
                labels[runaway] = c

    clusters = []
    for c in range(k):
        members = np.flatnonzero(labels == c)
        centroid = points[members].mean(axis=0) if members.size else centroids[c]
        clusters.append(ShapeCluster(centroid.reshape(-1, 2), members))
    return clusters


def _proportional_quotas(sizes: np.ndarray, count: int) -> np.ndarray:
    """Largest-remainder quotas, each >= 1 and capped at the cluster size."""
    k = sizes.shape[0]
    total = sizes.sum()
    exact = count * sizes / total
    quotas = np.maximum(1, np.floor(exact).astype(int))
    quotas = np.minimum(quotas, sizes)
    # Settle the difference by largest remainder among clusters with headroom
    # (smallest remainder first when over-allocated); ties go to lower index.
    while quotas.sum() != count:
        if quotas.sum() < count:
            room = (quotas < sizes)
            order = np.lexsort((np.arange(k), -(exact - quotas)))
            candidates = [i for i in order if room[i]]
            if not candidates:
                raise ValueError("not enough training shapes to honor the requested count")
            quotas[candidates[0]] += 1
        else:
            reducible = quotas > 1
            order = np.lexsort((np.arange(k), exact - quotas))
            candidates = [i for i in order if reducible[i]]
            if not candidates:
                candidates = list(np.flatnonzero(quotas > 0))
            quotas[candidates[0]] -= 1
    return quotas


def select_initializations(clusters: list[ShapeCluster], shapes, count: int) -> InitSet:
    """Pick `count` training shapes across clusters, nearest-to-centroid first.

    Per-cluster quotas are proportional to cluster size (largest-remainder
    rounding, every nonempty cluster represented); within a cluster, ties in
    distance break by dataset index.
    """
    shapes = np.asarray(shapes, dtype=np.float64)
    nonempty = [c for c in clusters if c.member_indices.size > 0]
    if count < len(nonempty):
        raise ValueError(f"count={count} cannot cover {len(nonempty)} clusters")
    total = sum(c.member_indices.size for c in nonempty)
    if count > total:
        raise ValueError(f"count={count} exceeds the {total} available shapes")

    sizes = np.array([c.member_indices.size for c in nonempty])
    quotas = _proportional_quotas(sizes, count)
    picked_shapes = []
    picked_clusters = []
    points = _flatten(shapes)
    for cluster_id, (cluster, quota) in enumerate(zip(nonempty, quotas)):
        members = cluster.member_indices
        dist = np.linalg.norm(points[members] - cluster.centroid.ravel(), axis=1)
        order = np.lexsort((members, dist))
        for j in order[:quota]:
            picked_shapes.append(shapes[members[j]])
            picked_clusters.append(cluster_id)
    return InitSet(np.asarray(picked_shapes), np.asarray(picked_clusters, dtype=np.int64))


def build_init_set(
    shapes,
    boxes: list[BoundingBox],
    n_clusters: int = 7,
    count: int = 50,
    max_iters: int = 100,
    rng: np.random.Generator | None = None,
) -> InitSet:
    """Normalize, cluster, and select initialization shapes in one call."""
    normalized = np.stack([normalize_to_box(s, b) for s, b in zip(shapes, boxes)])
    n = normalized.shape[0]
    k = min(n_clusters, n)
    count = min(count, n)
    clusters = kmeans_shapes(normalized, k, max_iters=max_iters, rng=rng)
    return select_initializations(clusters, normalized, max(count, len([c for c in clusters if c.member_indices.size])))
