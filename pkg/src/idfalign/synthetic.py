"""Synthetic face-like dataset generator for desk-scale verification.

Each sample jitters a fixed landmark template by a random similarity
transform plus per-landmark noise, then renders one Gaussian intensity blob
per landmark. Blob peak intensities are distinct and fixed per landmark so
that pixel differences around a landmark carry identity information -
without that, pixel-difference splits would have nothing to learn at desk
scale.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import AnnotatedSample, derive_bbox, save_image, write_pts

_PEAK_LOW, _PEAK_SPAN = 60, 196  # distinct per-landmark peaks in [60, 255]


@dataclass
class SyntheticConfig:
    count: int
    landmark_count: int = 68
    image_size: int = 96
    scale_jitter: tuple[float, float] = (0.92, 1.08)
    rotation_jitter: float = 0.10  # radians, +/-
    translation_jitter: float = 0.05  # fraction of image size, +/-
    deform_jitter: float = 0.12  # amplitude of the non-rigid shape modes, +/-
    landmark_noise_std: float = 0.8  # pixels
    blob_radius: float = 3.0  # Gaussian sigma, pixels
    background_noise_std: float = 4.0
    seed: int = 0

    def __post_init__(self):
        if self.count < 0:
            raise ValueError("count must be >= 0")
        if self.landmark_count < 2:
            raise ValueError("landmark_count must be >= 2")
        if self.image_size < 8:
            raise ValueError("image_size must be >= 8")
        if not (0 < self.scale_jitter[0] <= self.scale_jitter[1]):
            raise ValueError("scale_jitter must be an increasing positive range")
        if self.blob_radius <= 0:
            raise ValueError("blob_radius must be positive")
        for name in (
            "rotation_jitter",
            "translation_jitter",
            "deform_jitter",
            "landmark_noise_std",
            "background_noise_std",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


def _ring(n: int, cx: float, cy: float, rx: float, ry: float) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(n) / n
    return np.column_stack([cx + rx * np.cos(angles), cy + ry * np.sin(angles)])


def _template_68() -> np.ndarray:
    """Face-like 68-point layout in [-1, 1], y growing downward.

    Group order follows the standard markup: jaw, brows, nose, eyes, lips;
    indices 36 and 45 are the outer eye corners.
    """
    pts = np.zeros((68, 2))
    # Jaw: left ear down to the chin and back up to the right ear (y-down frame).
    jaw_angles = math.radians(160) + math.radians(220) * np.arange(17) / 16
    pts[0:17] = np.column_stack([0.85 * np.cos(jaw_angles), -1.0 * np.sin(jaw_angles)])
    brow_arc = 0.05 * np.sin(np.linspace(0, np.pi, 5))
    pts[17:22] = np.column_stack([np.linspace(-0.60, -0.16, 5), -0.52 - brow_arc])
    pts[22:27] = np.column_stack([np.linspace(0.16, 0.60, 5), -0.52 - brow_arc])
    pts[27:31] = np.column_stack([np.zeros(4), np.linspace(-0.34, 0.06, 4)])
    pts[31:36] = np.column_stack([np.linspace(-0.16, 0.16, 5), 0.16 - 0.04 * np.sin(np.linspace(0, np.pi, 5))])
    # Eyes: outer corner, two upper-lid points, inner corner, two lower-lid points.
    right_eye = np.array([
        [-0.50, -0.30], [-0.42, -0.345], [-0.28, -0.345],
        [-0.20, -0.30], [-0.28, -0.255], [-0.42, -0.255],
    ])
    pts[36:42] = right_eye
    pts[42:48] = right_eye[[3, 2, 1, 0, 5, 4]] * [-1, 1]
    pts[48:60] = np.roll(_ring(12, 0.0, 0.45, 0.30, 0.12), 6, axis=0)  # start at the left corner
    pts[60:68] = np.roll(_ring(8, 0.0, 0.45, 0.18, 0.05), 4, axis=0)
    return pts


def _template_generic(n: int) -> np.ndarray:
    """Outline ellipse plus interior feature rings for arbitrary point counts."""
    n_outline = max(3, int(round(0.4 * n)))
    n_outline = min(n_outline, n)
    pts = [_ring(n_outline, 0.0, 0.0, 0.85, 1.0)]
    remaining = n - n_outline
    groups = [(-0.35, -0.3, 0.15, 0.08), (0.35, -0.3, 0.15, 0.08), (0.0, 0.05, 0.12, 0.15), (0.0, 0.5, 0.3, 0.12)]
    sizes = [remaining // 4] * 4
    for i in range(remaining - sum(sizes)):
        sizes[i] += 1
    for (cx, cy, rx, ry), size in zip(groups, sizes):
        if size > 0:
            pts.append(_ring(size, cx, cy, rx, ry))
    return np.vstack(pts)[:n]


def face_template(landmark_count: int) -> np.ndarray:
    """Canonical landmark layout for the given count, in [-1, 1] (y down)."""
    if landmark_count == 68:
        return _template_68()
    return _template_generic(landmark_count)


def landmark_peaks(landmark_count: int) -> np.ndarray:
    """Distinct, fixed blob peak intensity per landmark."""
    idx = np.arange(landmark_count)
    return (_PEAK_LOW + (idx * 97) % _PEAK_SPAN).astype(np.float64)


def _deform(template: np.ndarray, a: float, b: float, c: float) -> np.ndarray:
    """Smooth non-rigid shape modes that survive box normalization.

    Similarity jitter alone disappears once shapes are placed into their
    bounding boxes, which would leave a cascade nothing to learn; these modes
    mimic pose/expression variation: horizontal stretch, lower-face drop, and
    shear with height. They are functions of position only, so they apply to
    any landmark count.
    """
    pts = template.copy()
    pts[:, 0] *= 1.0 + a
    lower = pts[:, 1] > 0
    pts[lower, 1] *= 1.0 + b
    pts[:, 0] += c * pts[:, 1]
    return pts


def _render(points: np.ndarray, size: int, sigma: float, noise_std: float, rng: np.random.Generator) -> np.ndarray:
    if noise_std > 0:
        field = np.clip(15.0 + noise_std * rng.standard_normal((size, size)), 0.0, 255.0)
    else:
        field = np.full((size, size), 15.0)
    peaks = landmark_peaks(points.shape[0])
    reach = int(math.ceil(3 * sigma))
    for (x, y), peak in zip(points, peaks):
        cx, cy = int(round(x)), int(round(y))
        x0, x1 = max(cx - reach, 0), min(cx + reach + 1, size)
        y0, y1 = max(cy - reach, 0), min(cy + reach + 1, size)
        if x0 >= x1 or y0 >= y1:
            continue
        xs = np.arange(x0, x1) - x
        ys = np.arange(y0, y1) - y
        blob = peak * np.exp(-(xs[None, :] ** 2 + ys[:, None] ** 2) / (2 * sigma**2))
        patch = field[y0:y1, x0:x1]
        np.maximum(patch, blob, out=patch)
    return np.rint(field).astype(np.uint8)


def generate_synthetic(config: SyntheticConfig) -> list[AnnotatedSample]:
    """Deterministic jittered-template dataset; ground truth inside each box."""
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    template = face_template(config.landmark_count)
    size = config.image_size
    base_scale = 0.36 * size
    center = (size - 1) / 2.0
    samples = []
    for i in range(config.count):
        d = config.deform_jitter
        mode_a, mode_b, mode_c = rng.uniform(-d, d, size=3)
        scale = base_scale * rng.uniform(*config.scale_jitter)
        angle = rng.uniform(-config.rotation_jitter, config.rotation_jitter)
        t_max = config.translation_jitter * size
        shift = rng.uniform(-t_max, t_max, size=2)
        c, s = math.cos(angle), math.sin(angle)
        rot = np.array([[c, -s], [s, c]])
        points = _deform(template, mode_a, mode_b, mode_c) @ (scale * rot).T + center + shift
        if config.landmark_noise_std > 0:
            points = points + config.landmark_noise_std * rng.standard_normal(points.shape)
        points = np.clip(points, 1.0, size - 2.0)
        image = _render(points, size, config.blob_radius, config.background_noise_std, rng)
        box = derive_bbox(points, padding_fraction=0.05)
        samples.append(AnnotatedSample(image, points, box, source=f"synthetic/{i:05d}"))
    return samples


def export_dataset(samples: list[AnnotatedSample], directory, image_format: str = "pgm") -> list[Path]:
    """Write image/.pts pairs in the directory-convention dataset layout."""
    if image_format not in ("pgm", "png"):
        raise ValueError(f"unsupported image format {image_format!r}")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for i, sample in enumerate(samples):
        stem = directory / f"sample_{i:05d}"
        image_path = stem.with_suffix(f".{image_format}")
        save_image(sample.image, image_path)
        write_pts(sample.shape, stem.with_suffix(".pts"))
        written.append(image_path)
    return written
