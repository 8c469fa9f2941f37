"""Leaf-path encodings and global feature-vector assembly.

Three interchangeable encodings of which leaf a sample reached in each tree:

* IDF - one scalar per tree. A root-to-leaf path of left/right choices
  (values 1/2) is read as digits with per-generation base k, the choice
  nearest the root carrying the largest weight; the value is then normalized
  into [0, 1]. Distances between IDF values shrink as two leaves share a
  deeper common ancestor, which is the point of the encoding.
* LBF - one-hot block of length 2^(depth-1) per tree.
* Index - the raw leaf index scaled to [0, 1]; kept as the weak baseline it
  is (equidistant leaf values discard the tree structure).
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .forest import leaf_indices_batch
from .features import candidate_intensities
from .validation import as_points

SIBLING_DIFFERENCE = 1  # fixed gap between the two path values (1, 2)


class EncodingKind(str, Enum):
    IDF = "idf"
    LBF = "lbf"
    INDEX = "index"


@dataclass(frozen=True)
class IdfParams:
    """Magnitude value k and the range convention used for normalization."""

    k: int = 10
    achievable_range: bool = False

    def __post_init__(self):
        if self.k < 2:
            raise ValueError(f"magnitude k must be >= 2, got {self.k}")


def idf_value(path, k: int) -> float:
    """Positional encoding of a {1, 2} path: sum of path[i] * k^(L-1-i)."""
    path = list(path)
    if not path:
        raise ValueError("path must contain at least one level")
    if k < 2:
        raise ValueError(f"magnitude k must be >= 2, got {k}")
    value = 0.0
    for v in path:
        if v not in (1, 2):
            raise ValueError(f"path values must be 1 or 2, got {v}")
        value = value * k + v
    return value


def idf_range(levels: int, k: int, achievable: bool = False) -> tuple[float, float]:
    """(min, max) of the IDF values at the given path length.

    The default convention takes min = k^(levels-1), one order below the
    smallest {1,2}-path value; pass achievable=True for the all-1-path
    minimum instead.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if k < 2:
        raise ValueError(f"magnitude k must be >= 2, got {k}")
    geometric = (float(k) ** levels - 1.0) / (k - 1.0)  # 1 + k + ... + k^(L-1)
    low = geometric if achievable else float(k) ** (levels - 1)
    return (low, 2.0 * geometric)


def normalize_idf(value: float, value_range: tuple[float, float]) -> float:
    """Map an IDF value into [0, 1] over the given (min, max) range."""
    low, high = value_range
    if not high > low:
        raise ValueError(f"invalid range: ({low}, {high})")
    if not (low <= value <= high):
        raise ValueError(f"value {value} outside range ({low}, {high})")
    return (value - low) / (high - low)


def encode_lbf(leaf_index: int, leaves_per_tree: int) -> np.ndarray:
    """One-hot vector with a single 1 at the reached leaf (left-to-right order)."""
    if not (0 <= leaf_index < leaves_per_tree):
        raise ValueError(f"leaf index {leaf_index} out of range for {leaves_per_tree} leaves")
    out = np.zeros(leaves_per_tree)
    out[leaf_index] = 1.0
    return out


def encode_index(leaf_index: int, leaves_per_tree: int) -> float:
    """Raw leaf index scaled to [0, 1]; the documented overfitting-prone baseline."""
    if leaf_index < 0:
        raise ValueError("leaf index must be >= 0")
    if leaves_per_tree < 2:
        raise ValueError("need at least 2 leaves to scale an index")
    return leaf_index / (leaves_per_tree - 1)


def feature_dimension(kind: EncodingKind, landmarks: int, trees: int, depth: int) -> int:
    """Global feature-vector length for l landmarks of t trees at the given depth."""
    per_tree = 2 ** (depth - 1) if kind == EncodingKind.LBF else 1
    return landmarks * trees * per_tree


def _path_digits(leaf_indices: np.ndarray, levels: int) -> np.ndarray:
    """(n, levels) matrix of {1, 2} path values for left-to-right leaf indices."""
    shifts = np.arange(levels - 1, -1, -1)
    return ((leaf_indices[:, None] >> shifts[None, :]) & 1) + 1


def idf_values_from_leaves(leaf_indices: np.ndarray, levels: int, k: int) -> np.ndarray:
    """Vectorized idf_value over leaf indices at a fixed depth."""
    weights = float(k) ** np.arange(levels - 1, -1, -1)
    return _path_digits(np.asarray(leaf_indices, dtype=np.int64), levels) @ weights


def encode_leaf_matrix(
    leaf_indices: np.ndarray,
    depth: int,
    kind: EncodingKind,
    idf_params: IdfParams,
) -> np.ndarray:
    """Encode a (n_samples, n_trees_total) leaf-index matrix into feature rows."""
    leaf_indices = np.asarray(leaf_indices, dtype=np.int64)
    n, total_trees = leaf_indices.shape
    levels = depth - 1
    leaves_per_tree = 2 ** levels
    if kind == EncodingKind.IDF:
        flat = idf_values_from_leaves(leaf_indices.ravel(), levels, idf_params.k)
        low, high = idf_range(levels, idf_params.k, idf_params.achievable_range)
        return ((flat - low) / (high - low)).reshape(n, total_trees)
    if kind == EncodingKind.INDEX:
        return leaf_indices.astype(np.float64) / (leaves_per_tree - 1)
    if kind == EncodingKind.LBF:
        out = np.zeros((n, total_trees * leaves_per_tree))
        cols = np.arange(total_trees)[None, :] * leaves_per_tree + leaf_indices
        out[np.arange(n)[:, None], cols] = 1.0
        return out
    raise ValueError(f"unknown encoding kind: {kind!r}")


def stage_leaf_indices(stage_model, image: np.ndarray, shape, transform) -> np.ndarray:
    """Leaf reached in every tree of a stage, ordered by landmark then tree."""
    pts = as_points(shape)
    out = []
    for candidates, forest in zip(stage_model.candidates, stage_model.forests):
        values = candidate_intensities(
            image, pts[candidates.landmark_index], candidates.offsets, transform
        )
        row = values[np.newaxis, :]
        out.extend(int(leaf_indices_batch(tree, row)[0]) for tree in forest.trees)
    return np.asarray(out, dtype=np.int64)


def build_feature_vector(
    stage_model,
    image: np.ndarray,
    shape,
    transform,
    kind: EncodingKind,
    idf_params: IdfParams = IdfParams(),
) -> np.ndarray:
    """Concatenated per-tree encodings for one sample under one stage model."""
    depth = stage_model.forests[0].depth
    leaves = stage_leaf_indices(stage_model, image, shape, transform)
    vector = encode_leaf_matrix(leaves[np.newaxis, :], depth, kind, idf_params)[0]
    linear = getattr(stage_model, "linear", None)
    if linear is not None and linear.weights.shape[0] != vector.shape[0]:
        raise ValueError(
            f"{kind.value} encoding yields {vector.shape[0]} features but the stage "
            f"regressor expects {linear.weights.shape[0]}"
        )
    return vector
