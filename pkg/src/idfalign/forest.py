"""Per-landmark regression forests over pixel-difference features.

Trees are complete binary trees of a fixed depth stored in heap order:
internal node i has children 2i+1 and 2i+2, and the children of the last
internal level are the leaves (leaf index = node index - internal count).
A sample routes left when its pixel difference is strictly below the node
threshold. Splits minimize the size-weighted sum of child target variances.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .features import CandidateSet, candidate_intensities
from .validation import as_points

# Thresholds are learned in [-255, 255]; pass-through nodes store one past the
# maximum possible feature so every input (training or not) routes left.
PASS_THROUGH_THRESHOLD = 256

LEFT, RIGHT = 1, 2


@dataclass
class ForestTrainConfig:
    depth: int = 7
    trees: int = 11
    candidates_per_node: int = 50
    thresholds_per_candidate: int = 1
    min_samples_per_node: int = 5
    bagging_fraction: float = 0.8

    def __post_init__(self):
        if self.depth < 2:
            raise ValueError("tree depth must be >= 2")
        for name in ("trees", "candidates_per_node", "thresholds_per_candidate", "min_samples_per_node"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not (0.0 < self.bagging_fraction <= 1.0):
            raise ValueError("bagging_fraction must lie in (0, 1]")


@dataclass(eq=False)
class DecisionTree:
    depth: int
    pairs: np.ndarray  # (n_internal, 2) int32 candidate indices
    thresholds: np.ndarray  # (n_internal,) int32
    leaves: np.ndarray  # (n_leaves, 2) float64 mean residuals

    @property
    def n_internal(self) -> int:
        return 2 ** (self.depth - 1) - 1

    @property
    def n_leaves(self) -> int:
        return 2 ** (self.depth - 1)


@dataclass(eq=False)
class Forest:
    landmark_index: int
    trees: list[DecisionTree] = field(default_factory=list)

    @property
    def depth(self) -> int:
        return self.trees[0].depth


def _variance_trace(targets: np.ndarray) -> float:
    """Population variance summed over coordinates (trace of the covariance)."""
    if targets.shape[0] == 0:
        return 0.0
    return float(np.sum(targets.var(axis=0)))


def split_score(left_targets, right_targets) -> float:
    """Size-weighted within-child variance of a candidate split."""
    left = np.asarray(left_targets, dtype=np.float64).reshape(-1, 2) if len(left_targets) else np.empty((0, 2))
    right = np.asarray(right_targets, dtype=np.float64).reshape(-1, 2) if len(right_targets) else np.empty((0, 2))
    n = left.shape[0] + right.shape[0]
    if n == 0:
        raise ValueError("cannot score a split of two empty sets")
    return (left.shape[0] * _variance_trace(left) + right.shape[0] * _variance_trace(right)) / n


def propose_node_splits(
    rng: np.random.Generator,
    node_values: np.ndarray,
    config: ForestTrainConfig,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Random (pair, threshold) proposals for one node.

    Draw order is part of the determinism contract: firsts, then offsets for
    the seconds, then one threshold per proposal uniform over that proposal's
    observed feature range at the node.
    """
    n_candidates = node_values.shape[1]
    m = config.candidates_per_node * config.thresholds_per_candidate
    firsts = np.repeat(rng.integers(0, n_candidates, size=config.candidates_per_node), config.thresholds_per_candidate)
    offsets = np.repeat(rng.integers(1, n_candidates, size=config.candidates_per_node), config.thresholds_per_candidate)
    seconds = (firsts + offsets) % n_candidates
    feats = node_values[:, firsts].astype(np.int32) - node_values[:, seconds].astype(np.int32)
    lo = feats.min(axis=0)
    hi = feats.max(axis=0)
    thresholds = rng.integers(lo, hi + 1, size=m).astype(np.int32)
    return firsts.astype(np.int32), seconds.astype(np.int32), thresholds


def _score_proposals(feats: np.ndarray, thresholds: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Vectorized split_score for every proposal column of `feats`."""
    n = targets.shape[0]
    mask = feats < thresholds[np.newaxis, :]
    counts_l = mask.sum(axis=0).astype(np.float64)
    counts_r = n - counts_l
    t = targets
    t_sq = t * t
    sum_all = t.sum(axis=0)
    sumsq_all = t_sq.sum(axis=0)
    sum_l = mask.T.astype(np.float64) @ t
    sumsq_l = mask.T.astype(np.float64) @ t_sq
    sum_r = sum_all - sum_l
    sumsq_r = sumsq_all - sumsq_l

    def side_var(counts, s, sq):
        with np.errstate(divide="ignore", invalid="ignore"):
            v = sq / counts[:, None] - (s / counts[:, None]) ** 2
        v[counts == 0] = 0.0
        return np.clip(v, 0.0, None).sum(axis=1)

    h_l = side_var(counts_l, sum_l, sumsq_l)
    h_r = side_var(counts_r, sum_r, sumsq_r)
    return (counts_l * h_l + counts_r * h_r) / n


def train_tree(
    candidate_values: np.ndarray,
    targets: np.ndarray,
    config: ForestTrainConfig,
    rng: np.random.Generator,
) -> DecisionTree:
    """Grow one complete tree of `config.depth` on precomputed candidate intensities.

    `candidate_values` is (n_samples, n_candidates) int, `targets` is
    (n_samples, 2) normalized-frame residuals. Nodes with too few samples or
    no variance-reducing proposal become pass-through (everything routes
    left); leaves output the mean residual of the samples reaching them,
    (0, 0) when empty.
    """
    values = np.asarray(candidate_values)
    targets = np.asarray(targets, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] == 0:
        raise ValueError("candidate_values must be a nonempty (n_samples, n_candidates) array")
    if targets.shape != (values.shape[0], 2):
        raise ValueError(f"targets must be ({values.shape[0]}, 2), got {targets.shape}")

    n_internal = 2 ** (config.depth - 1) - 1
    n_leaves = 2 ** (config.depth - 1)
    pairs = np.zeros((n_internal, 2), dtype=np.int32)
    pairs[:, 1] = 1  # placeholder pair for pass-through nodes; never consulted
    thresholds = np.full(n_internal, PASS_THROUGH_THRESHOLD, dtype=np.int32)

    node_members: dict[int, np.ndarray] = {0: np.arange(values.shape[0])}
    for node in range(n_internal):
        idx = node_members.pop(node, np.empty(0, dtype=np.int64))
        left_child, right_child = 2 * node + 1, 2 * node + 2
        if idx.shape[0] < config.min_samples_per_node:
            node_members[left_child] = idx
            node_members[right_child] = np.empty(0, dtype=np.int64)
            continue
        node_values = values[idx]
        node_targets = targets[idx]
        firsts, seconds, thr = propose_node_splits(rng, node_values, config)
        feats = node_values[:, firsts].astype(np.int32) - node_values[:, seconds].astype(np.int32)
        scores = _score_proposals(feats, thr, node_targets)
        best = int(np.argmin(scores))
        total = _variance_trace(node_targets)
        gain = total - float(scores[best])
        if gain <= max(1e-12, 1e-9 * total):
            node_members[left_child] = idx
            node_members[right_child] = np.empty(0, dtype=np.int64)
            continue
        pairs[node] = (firsts[best], seconds[best])
        thresholds[node] = thr[best]
        went_left = feats[:, best] < thr[best]
        node_members[left_child] = idx[went_left]
        node_members[right_child] = idx[~went_left]

    leaves = np.zeros((n_leaves, 2), dtype=np.float64)
    for leaf in range(n_leaves):
        idx = node_members.get(n_internal + leaf, np.empty(0, dtype=np.int64))
        if idx.shape[0] > 0:
            leaves[leaf] = targets[idx].mean(axis=0)
    return DecisionTree(config.depth, pairs, thresholds, leaves)


def train_tree_from_samples(
    samples,
    candidates: CandidateSet,
    config: ForestTrainConfig,
    rng: np.random.Generator,
) -> DecisionTree:
    """Grow a tree from (image, shape estimate, transform, residual) tuples.

    Convenience wrapper that evaluates each sample's candidate intensities
    under its own pose before calling :func:`train_tree`.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("cannot train a tree on an empty sample set")
    values = np.stack(
        [
            candidate_intensities(
                image, as_points(shape)[candidates.landmark_index], candidates.offsets, transform
            )
            for image, shape, transform, _ in samples
        ]
    )
    targets = np.asarray([target for *_, target in samples], dtype=np.float64)
    return train_tree(values, targets, config, rng)


def train_forest(
    candidate_values: np.ndarray,
    targets: np.ndarray,
    config: ForestTrainConfig,
    seed_seq: np.random.SeedSequence,
    landmark_index: int = 0,
) -> Forest:
    """Train `config.trees` bagged trees with independent per-tree seeds."""
    values = np.asarray(candidate_values)
    n = values.shape[0]
    bag_size = max(1, int(config.bagging_fraction * n))
    trees = []
    for child in seed_seq.spawn(config.trees):
        rng = np.random.Generator(np.random.PCG64(child))
        bag = np.sort(rng.permutation(n)[:bag_size])
        trees.append(train_tree(values[bag], targets[bag], config, rng))
    return Forest(landmark_index, trees)


def route_values(tree: DecisionTree, sample_values: np.ndarray) -> np.ndarray:
    """Root-to-leaf path over precomputed candidate intensities; values in {1, 2}."""
    path = np.empty(tree.depth - 1, dtype=np.int8)
    node = 0
    for level in range(tree.depth - 1):
        first, second = tree.pairs[node]
        feat = int(sample_values[first]) - int(sample_values[second])
        if feat < tree.thresholds[node]:
            path[level] = LEFT
            node = 2 * node + 1
        else:
            path[level] = RIGHT
            node = 2 * node + 2
    return path


def leaf_from_path(path) -> int:
    """Left-to-right leaf index encoded by a {1, 2} path."""
    leaf = 0
    for v in path:
        leaf = 2 * leaf + (int(v) - 1)
    return leaf


def route(
    tree: DecisionTree,
    image: np.ndarray,
    shape,
    transform,
    candidates: CandidateSet,
) -> np.ndarray:
    """Path of the sample through the tree under the current shape estimate."""
    pts = as_points(shape)
    values = candidate_intensities(image, pts[candidates.landmark_index], candidates.offsets, transform)
    return route_values(tree, values)


def tree_predict_values(tree: DecisionTree, sample_values: np.ndarray) -> np.ndarray:
    return tree.leaves[leaf_from_path(route_values(tree, sample_values))]


def forest_predict(
    forest: Forest,
    image: np.ndarray,
    shape,
    transform,
    candidates: CandidateSet,
) -> np.ndarray:
    """Mean of the reached leaves' residual outputs over all trees."""
    pts = as_points(shape)
    values = candidate_intensities(image, pts[candidates.landmark_index], candidates.offsets, transform)
    out = np.zeros(2)
    for tree in forest.trees:
        out += tree_predict_values(tree, values)
    return out / len(forest.trees)


def leaf_indices_batch(tree: DecisionTree, values: np.ndarray) -> np.ndarray:
    """Leaf index per row of a (n_samples, n_candidates) intensity matrix."""
    n = values.shape[0]
    node = np.zeros(n, dtype=np.int64)
    rows = np.arange(n)
    for _ in range(tree.depth - 1):
        first = tree.pairs[node, 0]
        second = tree.pairs[node, 1]
        feat = values[rows, first].astype(np.int32) - values[rows, second].astype(np.int32)
        node = 2 * node + 1 + (feat >= tree.thresholds[node])
    return node - tree.n_internal
