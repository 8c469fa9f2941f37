"""Dataset ingestion: `.pts` landmark files, bounding-box derivation,
grayscale image loading (PGM P5 and PNG), and manifest discovery.

A dataset is either a directory of image/`.pts` pairs sharing a stem, or a
CSV manifest with `image_path` and `pts_path` columns. Coordinates are used
exactly as stored in the files.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .geometry import BoundingBox
from .validation import as_image, as_points

DEFAULT_BOX_PADDING = 0.05

# Weights for converting color pixels to grayscale.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

IMAGE_SUFFIXES = (".pgm", ".png")


@dataclass(eq=False)
class AnnotatedSample:
    image: np.ndarray  # (height, width) uint8
    shape: np.ndarray  # (landmarks, 2) image frame
    box: BoundingBox
    source: str = ""


class PtsParseError(ValueError):
    pass


def parse_pts(text: str) -> np.ndarray:
    """Parse the n_points/{...} landmark annotation format."""
    n_points = None
    points = []
    in_body = False
    closed = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if not in_body:
            if line.startswith("version:"):
                continue
            if line.startswith("n_points:"):
                value = line.split(":", 1)[1].strip()
                try:
                    n_points = int(value)
                except ValueError:
                    raise PtsParseError(f"line {lineno}: bad point count {value!r}")
                continue
            if line == "{" or line.startswith("{"):
                in_body = True
                continue
            raise PtsParseError(f"line {lineno}: expected an opening brace before {line!r}")
        if line == "}":
            closed = True
            break
        tokens = line.split()
        if len(tokens) != 2:
            raise PtsParseError(f"line {lineno}: expected 'x y', got {line!r}")
        try:
            points.append((float(tokens[0]), float(tokens[1])))
        except ValueError:
            raise PtsParseError(f"line {lineno}: non-numeric coordinate in {line!r}")
    if not in_body:
        raise PtsParseError("missing opening brace")
    if not closed:
        raise PtsParseError("missing closing brace")
    if n_points is None:
        raise PtsParseError("missing n_points header")
    if len(points) != n_points:
        raise PtsParseError(f"declared n_points: {n_points} but found {len(points)} points")
    return np.asarray(points, dtype=np.float64)


def format_pts(points) -> str:
    """Serialize points in the `.pts` format at full float precision."""
    pts = as_points(points)
    lines = ["version: 1", f"n_points: {pts.shape[0]}", "{"]
    lines.extend(f"{float(x)!r} {float(y)!r}" for x, y in pts)
    lines.append("}")
    return "\n".join(lines) + "\n"


def write_pts(points, path) -> None:
    Path(path).write_text(format_pts(points))


def derive_bbox(points, padding_fraction: float = 0.0) -> BoundingBox:
    """Tight box around the points, grown by padding_fraction per side."""
    pts = as_points(points)
    if padding_fraction < 0:
        raise ValueError("padding_fraction must be >= 0")
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    width = hi[0] - lo[0]
    height = hi[1] - lo[1]
    pad_x = padding_fraction * width
    pad_y = padding_fraction * height
    return BoundingBox(lo[0] - pad_x, lo[1] - pad_y, width + 2 * pad_x, height + 2 * pad_y)


def to_grayscale(rgb: np.ndarray) -> np.ndarray:
    """Luma conversion, rounded to the nearest integer intensity."""
    weights = np.asarray(LUMA_WEIGHTS)
    return np.clip(np.rint(rgb[..., :3].astype(np.float64) @ weights), 0, 255).astype(np.uint8)


def _load_pgm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    if not data.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary (P5) PGM file")
    # Header tokens: magic, width, height, maxval; comments start with '#'.
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte after maxval
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise ValueError(f"{path}: non-numeric PGM header fields")
    if width <= 0 or height <= 0:
        raise ValueError(f"{path}: bad PGM dimensions {width}x{height}")
    if not (0 < maxval <= 255):
        raise ValueError(f"{path}: only 8-bit PGM supported (maxval {maxval})")
    raster = data[pos : pos + width * height]
    if len(raster) != width * height:
        raise ValueError(f"{path}: truncated PGM raster ({len(raster)} of {width * height} bytes)")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy()


def _load_png(path: Path) -> np.ndarray:
    try:
        with PILImage.open(path) as img:
            img.load()
            if img.mode in ("L", "I;16", "I"):
                arr = np.asarray(img.convert("L"))
                return arr.astype(np.uint8).copy()
            rgb = np.asarray(img.convert("RGB"))
    except (OSError, SyntaxError) as exc:
        raise ValueError(f"{path}: cannot decode PNG ({exc})")
    return to_grayscale(rgb)


def load_image(path) -> np.ndarray:
    """Load a grayscale image from a PGM (binary P5) or PNG file."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        return _load_pgm(path)
    if suffix == ".png":
        return _load_png(path)
    raise ValueError(f"{path}: unsupported image format {suffix!r} (expected .pgm or .png)")


def save_pgm(image: np.ndarray, path) -> None:
    img = as_image(image)
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + img.tobytes())


def save_png(image: np.ndarray, path) -> None:
    img = as_image(image)
    PILImage.fromarray(img, mode="L").save(Path(path), format="PNG")


def save_image(image: np.ndarray, path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        save_pgm(image, path)
    elif path.suffix.lower() == ".png":
        save_png(image, path)
    else:
        raise ValueError(f"{path}: unsupported image format {path.suffix!r}")


def _sample_from_pair(image_path: Path, pts_path: Path, padding: float, source: str) -> AnnotatedSample:
    shape = parse_pts(pts_path.read_text())
    image = load_image(image_path)
    return AnnotatedSample(image, shape, derive_bbox(shape, padding), source)


def load_manifest(path, box_padding: float = DEFAULT_BOX_PADDING) -> list[AnnotatedSample]:
    """Load a dataset from a directory of image/.pts pairs or a CSV manifest."""
    path = Path(path)
    samples = []
    if path.is_dir():
        stems = sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        for image_path in stems:
            pts_path = image_path.with_suffix(".pts")
            if pts_path.exists():
                samples.append(_sample_from_pair(image_path, pts_path, box_padding, image_path.stem))
        if not samples:
            raise ValueError(f"{path}: no image/.pts pairs found")
        return samples
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"image_path", "pts_path"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: manifest must have image_path and pts_path columns")
        for row in reader:
            image_path = (path.parent / row["image_path"]).resolve()
            pts_path = (path.parent / row["pts_path"]).resolve()
            samples.append(_sample_from_pair(image_path, pts_path, box_padding, Path(row["image_path"]).stem))
    if not samples:
        raise ValueError(f"{path}: manifest lists no samples")
    return samples
