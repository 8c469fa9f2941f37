"""Input validation helpers shared across the package."""
from __future__ import annotations

import numpy as np


def as_points(points, name: str = "shape") -> np.ndarray:
    """Coerce to a float64 (n, 2) array of finite 2D points."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"{name} must be an (n, 2) array of points, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise ValueError(f"{name} must contain at least one point")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite coordinates")
    return arr


def as_image(image, name: str = "image") -> np.ndarray:
    """Coerce to a uint8 (height, width) grayscale image."""
    arr = np.asarray(image)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2D grayscale array, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    if arr.dtype != np.uint8:
        if not np.issubdtype(arr.dtype, np.number):
            raise ValueError(f"{name} has non-numeric dtype {arr.dtype}")
        if arr.min() < 0 or arr.max() > 255:
            raise ValueError(f"{name} intensities must lie in [0, 255]")
        arr = arr.astype(np.uint8)
    return arr


def check_same_landmarks(a: np.ndarray, b: np.ndarray, what: str = "shapes") -> None:
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"{what} have mismatched landmark counts: {a.shape[0]} vs {b.shape[0]}")


def check_finite_matrix(arr: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
