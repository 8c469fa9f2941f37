"""Shapes, boxes, similarity transforms, and the normalized alignment-error metric.

Shapes are plain float64 arrays of (x, y) rows. Two frames are used
throughout: the image frame (pixels) and the box-normalized frame, where a
sample's bounding box maps to the square [-1, 1] x [-1, 1].
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .validation import as_points, check_same_landmarks

# 0-based landmark indices of the standard 68-point markup.
OUTER_EYE_CORNERS = (36, 45)
RIGHT_EYE_RING = slice(36, 42)
LEFT_EYE_RING = slice(42, 48)
MARKUP_68 = 68


class NormalizationKind(str, Enum):
    """Denominator used by :func:`alignment_error`."""

    INTER_OCULAR = "interocular"
    INTER_PUPIL = "interpupil"
    BOX_DIAGONAL = "boxdiag"


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    width: float
    height: float

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError(f"degenerate box: width={self.width}, height={self.height}")
        for v in (self.x, self.y, self.width, self.height):
            if not math.isfinite(v):
                raise ValueError("box has non-finite fields")

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.width / 2.0, self.y + self.height / 2.0)


@dataclass(frozen=True)
class SimilarityTransform:
    """Scale/rotation/translation map; applied as p -> s*R(theta)*p + t."""

    scale: float = 1.0
    rotation: float = 0.0
    tx: float = 0.0
    ty: float = 0.0

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError(f"scale must be positive and finite, got {self.scale}")

    @property
    def linear(self) -> np.ndarray:
        """The 2x2 matrix s*R(theta)."""
        c = math.cos(self.rotation)
        s = math.sin(self.rotation)
        return self.scale * np.array([[c, -s], [s, c]])

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.linear.T + np.array([self.tx, self.ty])

    def apply_vectors(self, vectors) -> np.ndarray:
        """Rotate and scale offset vectors; translation does not apply."""
        return np.asarray(vectors, dtype=np.float64) @ self.linear.T

    def inverse(self) -> "SimilarityTransform":
        inv_scale = 1.0 / self.scale
        c = math.cos(-self.rotation)
        s = math.sin(-self.rotation)
        tx = -inv_scale * (c * self.tx - s * self.ty)
        ty = -inv_scale * (s * self.tx + c * self.ty)
        return SimilarityTransform(inv_scale, -self.rotation, tx, ty)


def normalize_to_box(shape, box: BoundingBox) -> np.ndarray:
    """Map image-frame points so the box corners go to (-1,-1) and (1,1)."""
    pts = as_points(shape)
    out = np.empty_like(pts)
    out[:, 0] = 2.0 * (pts[:, 0] - box.x) / box.width - 1.0
    out[:, 1] = 2.0 * (pts[:, 1] - box.y) / box.height - 1.0
    return out


def denormalize_from_box(shape, box: BoundingBox) -> np.ndarray:
    """Inverse of :func:`normalize_to_box`."""
    pts = as_points(shape)
    out = np.empty_like(pts)
    out[:, 0] = (pts[:, 0] + 1.0) * box.width / 2.0 + box.x
    out[:, 1] = (pts[:, 1] + 1.0) * box.height / 2.0 + box.y
    return out


def compute_mean_shape(shapes, boxes) -> np.ndarray:
    """Per-landmark mean of box-normalized shapes, in the normalized frame."""
    shapes = list(shapes)
    boxes = list(boxes)
    if not shapes:
        raise ValueError("cannot compute a mean shape from an empty training set")
    if len(shapes) != len(boxes):
        raise ValueError(f"{len(shapes)} shapes but {len(boxes)} boxes")
    first = as_points(shapes[0])
    acc = np.zeros_like(first)
    for shape, box in zip(shapes, boxes):
        pts = as_points(shape)
        check_same_landmarks(first, pts)
        acc += normalize_to_box(pts, box)
    return acc / len(shapes)


def estimate_similarity(src, dst) -> SimilarityTransform:
    """Least-squares similarity (Procrustes, reflection excluded) mapping src onto dst."""
    a = as_points(src, "src")
    b = as_points(dst, "dst")
    check_same_landmarks(a, b)
    if a.shape[0] < 2:
        raise ValueError("need at least 2 points to estimate a similarity")
    mu_a = a.mean(axis=0)
    mu_b = b.mean(axis=0)
    ac = a - mu_a
    bc = b - mu_b
    denom = float(np.sum(ac * ac))
    if denom <= 0.0:
        raise ValueError("source points are all coincident; similarity is undefined")
    # Closed form for min_{s,theta} sum ||s R a_i - b_i||^2 over centered points.
    dot = float(np.sum(ac * bc))
    cross = float(np.sum(ac[:, 0] * bc[:, 1] - ac[:, 1] * bc[:, 0]))
    scale = math.hypot(dot, cross) / denom
    if scale <= 0.0:
        raise ValueError("degenerate point configuration; similarity is undefined")
    rotation = math.atan2(cross, dot)
    c = math.cos(rotation)
    s = math.sin(rotation)
    tx = mu_b[0] - scale * (c * mu_a[0] - s * mu_a[1])
    ty = mu_b[1] - scale * (s * mu_a[0] + c * mu_a[1])
    return SimilarityTransform(scale, rotation, tx, ty)


def normalizing_distance(truth: np.ndarray, norm: NormalizationKind) -> float:
    """The denominator of the alignment error for a ground-truth shape."""
    truth = as_points(truth, "truth")
    if norm in (NormalizationKind.INTER_OCULAR, NormalizationKind.INTER_PUPIL):
        if truth.shape[0] != MARKUP_68:
            raise ValueError(
                f"{norm.value} normalization requires the 68-point markup, "
                f"got {truth.shape[0]} landmarks"
            )
    if norm == NormalizationKind.INTER_OCULAR:
        i, j = OUTER_EYE_CORNERS
        return float(np.linalg.norm(truth[i] - truth[j]))
    if norm == NormalizationKind.INTER_PUPIL:
        right = truth[RIGHT_EYE_RING].mean(axis=0)
        left = truth[LEFT_EYE_RING].mean(axis=0)
        return float(np.linalg.norm(right - left))
    if norm == NormalizationKind.BOX_DIAGONAL:
        lo = truth.min(axis=0)
        hi = truth.max(axis=0)
        return float(np.hypot(hi[0] - lo[0], hi[1] - lo[1]))
    raise ValueError(f"unknown normalization kind: {norm!r}")


def alignment_error(predicted, truth, norm: NormalizationKind = NormalizationKind.INTER_OCULAR) -> float:
    """Mean per-landmark distance between shapes, divided by the normalizing distance.

    The denominator always comes from `truth`, so under BOX_DIAGONAL the
    error is not symmetric in its arguments unless both shapes span the same
    tight box.
    """
    pred = as_points(predicted, "predicted")
    gt = as_points(truth, "truth")
    check_same_landmarks(pred, gt)
    denom = normalizing_distance(gt, norm)
    if denom <= 0.0:
        raise ValueError("normalizing distance is zero")
    mean_dist = float(np.mean(np.linalg.norm(pred - gt, axis=1)))
    return mean_dist / denom
