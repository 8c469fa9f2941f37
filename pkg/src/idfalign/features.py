"""Pose-indexed pixel-difference features.

Candidate offsets are sampled in the mean-shape normalized frame around each
landmark. At evaluation time an offset is rotated/scaled into the image frame
by the sample's current similarity to the mean shape, added to the landmark's
current position, rounded, and clamped; a feature is the intensity difference
of two such candidate pixels.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import SimilarityTransform
from .validation import as_image, as_points

DEFAULT_CANDIDATE_COUNT = 500

# Shrinking per-stage sampling radii (fractions of the normalized-frame
# half-extent) for the default 7-stage cascade.
DEFAULT_RADIUS_SCHEDULE_7 = (0.30, 0.25, 0.20, 0.15, 0.12, 0.10, 0.08)


@dataclass(frozen=True, eq=False)
class CandidateSet:
    """Candidate pixel offsets around one landmark for one cascade stage."""

    offsets: np.ndarray  # (count, 2) float64, normalized-frame
    radius: float
    landmark_index: int = 0
    stage_index: int = 0

    def __post_init__(self):
        offsets = np.asarray(self.offsets, dtype=np.float64)
        if offsets.ndim != 2 or offsets.shape[1] != 2:
            raise ValueError(f"offsets must be (count, 2), got {offsets.shape}")
        object.__setattr__(self, "offsets", offsets)
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")

    def __len__(self) -> int:
        return self.offsets.shape[0]


def default_radius_schedule(stages: int) -> tuple[float, ...]:
    """Strictly decreasing radius fractions for the given stage count."""
    if stages < 1:
        raise ValueError("stages must be >= 1")
    if stages == 7:
        return DEFAULT_RADIUS_SCHEDULE_7
    if stages == 1:
        return (DEFAULT_RADIUS_SCHEDULE_7[0],)
    first, last = DEFAULT_RADIUS_SCHEDULE_7[0], DEFAULT_RADIUS_SCHEDULE_7[-1]
    ratio = (last / first) ** (1.0 / (stages - 1))
    return tuple(first * ratio**i for i in range(stages))


def check_radius_schedule(schedule, stages: int) -> tuple[float, ...]:
    values = tuple(float(v) for v in schedule)
    if len(values) != stages:
        raise ValueError(f"radius schedule has {len(values)} entries for {stages} stages")
    if any(not (0.0 < v <= 1.0) for v in values):
        raise ValueError("radius fractions must lie in (0, 1]")
    if any(b > a for a, b in zip(values, values[1:])):
        raise ValueError("radius schedule must be non-increasing")
    return values


def sample_candidates(
    rng: np.random.Generator,
    radius: float,
    count: int = DEFAULT_CANDIDATE_COUNT,
    landmark_index: int = 0,
    stage_index: int = 0,
) -> CandidateSet:
    """Sample `count` offsets uniformly in the disk of the given radius."""
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    r = radius * np.sqrt(rng.random(count))
    theta = 2.0 * np.pi * rng.random(count)
    offsets = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    return CandidateSet(offsets, radius, landmark_index, stage_index)


def candidate_positions(offsets: np.ndarray, landmark_xy, transform: SimilarityTransform) -> np.ndarray:
    """Image-frame pixel positions for normalized-frame offsets around a landmark."""
    return transform.apply_vectors(offsets) + np.asarray(landmark_xy, dtype=np.float64)


def candidate_intensities(
    image: np.ndarray,
    landmark_xy,
    offsets: np.ndarray,
    transform: SimilarityTransform,
) -> np.ndarray:
    """Clamped image intensities at each candidate position, as int16."""
    img = as_image(image)
    pos = candidate_positions(offsets, landmark_xy, transform)
    cols = np.clip(np.rint(pos[:, 0]).astype(np.int64), 0, img.shape[1] - 1)
    rows = np.clip(np.rint(pos[:, 1]).astype(np.int64), 0, img.shape[0] - 1)
    return img[rows, cols].astype(np.int16)


def pixel_diff(
    image: np.ndarray,
    shape,
    landmark_index: int,
    pair: tuple[int, int],
    candidates: CandidateSet,
    transform: SimilarityTransform,
) -> int:
    """Intensity difference of the pair's two candidate pixels, in [-255, 255]."""
    first, second = pair
    n = len(candidates)
    if not (0 <= first < n and 0 <= second < n):
        raise ValueError(f"pair {pair} out of range for {n} candidates")
    if first == second:
        raise ValueError("pair must reference two distinct candidates")
    pts = as_points(shape)
    values = candidate_intensities(
        image, pts[landmark_index], candidates.offsets[[first, second]], transform
    )
    return int(values[0]) - int(values[1])
