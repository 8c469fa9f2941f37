"""Versioned little-endian binary model format.

Layout (all integers little-endian, all floats IEEE-754 binary64):

    magic               4 bytes  b"IDF1"
    format version      u32
    config block        see _CONFIG_STRUCT below, then stages x f64 radii
    mean shape          landmarks x 2 f64
    init shape count    u32
    init shapes         count x landmarks x 2 f64
    per stage:
      per landmark:
        candidate offsets   candidates x 2 f64
        per tree:
          internal nodes    (2^(depth-1) - 1) x (first u32, second u32, threshold i32)
          leaf outputs      2^(depth-1) x 2 f64
      regressor weights     feature_dim x (2 * landmarks) f64, row-major
      regressor bias        2 * landmarks f64

Round-trips are bit-exact: save(load(path)) reproduces the file byte for
byte, and a loaded model fits identically to the one that was saved.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .cascade import FORMAT_VERSION, CascadeConfig, CascadeModel, StageModel
from .encoding import EncodingKind
from .features import CandidateSet
from .forest import DecisionTree, Forest
from .ridge import LinearModel

MAGIC = b"IDF1"

_ENCODING_CODES = {EncodingKind.IDF: 0, EncodingKind.LBF: 1, EncodingKind.INDEX: 2}
_ENCODING_FROM_CODE = {v: k for k, v in _ENCODING_CODES.items()}

# stages, landmarks, trees, depth, encoding, idf_k, achievable-range flag,
# candidates, train inits, ridge lambda, seed, candidates/node,
# thresholds/candidate, min samples/node, bagging fraction.
_CONFIG_STRUCT = struct.Struct("<IIIIBIBIIdQIIId")
_NODE_STRUCT = struct.Struct("<IIi")


class ModelFormatError(ValueError):
    pass


def model_nbytes(config: CascadeConfig, n_init_shapes: int) -> int:
    """Exact serialized size for a model with the given config."""
    l, t, d = config.landmarks, config.trees_per_forest, config.depth
    n_internal = 2 ** (d - 1) - 1
    n_leaves = 2 ** (d - 1)
    per_tree = n_internal * _NODE_STRUCT.size + n_leaves * 16
    per_landmark = config.candidates_per_landmark * 16 + t * per_tree
    per_stage = l * per_landmark + (config.feature_dim * 2 * l + 2 * l) * 8
    return (
        len(MAGIC)
        + 4
        + _CONFIG_STRUCT.size
        + config.stages * 8
        + l * 16
        + 4
        + n_init_shapes * l * 16
        + config.stages * per_stage
    )


def _write_f64(out: list[bytes], arr: np.ndarray) -> None:
    out.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def save_model(model: CascadeModel, path) -> None:
    config = model.config
    out: list[bytes] = [MAGIC, struct.pack("<I", model.format_version)]
    out.append(
        _CONFIG_STRUCT.pack(
            config.stages,
            config.landmarks,
            config.trees_per_forest,
            config.depth,
            _ENCODING_CODES[config.encoding],
            config.idf_k,
            int(config.idf_achievable_range),
            config.candidates_per_landmark,
            config.train_inits_per_sample,
            config.ridge_lambda,
            config.seed,
            config.candidates_per_node,
            config.thresholds_per_candidate,
            config.min_samples_per_node,
            config.bagging_fraction,
        )
    )
    _write_f64(out, np.asarray(config.radius_schedule))
    _write_f64(out, model.mean_shape)
    out.append(struct.pack("<I", model.init_shapes.shape[0]))
    _write_f64(out, model.init_shapes)
    for stage in model.stages:
        if stage.linear is None:
            raise ModelFormatError("cannot serialize a partially trained stage")
        for candidates, forest in zip(stage.candidates, stage.forests):
            _write_f64(out, candidates.offsets)
            for tree in forest.trees:
                nodes = np.empty((tree.n_internal, 3), dtype="<i4")
                nodes[:, :2] = tree.pairs
                nodes[:, 2] = tree.thresholds
                out.append(nodes.tobytes())
                _write_f64(out, tree.leaves)
        _write_f64(out, stage.linear.weights)
        _write_f64(out, stage.linear.bias)
    Path(path).write_bytes(b"".join(out))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ModelFormatError(
                f"truncated model file: wanted {n} bytes at offset {self.pos}, "
                f"only {len(self.data) - self.pos} remain"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, spec: struct.Struct):
        return spec.unpack(self.take(spec.size))

    def f64(self, shape: tuple[int, ...]) -> np.ndarray:
        count = int(np.prod(shape))
        return np.frombuffer(self.take(count * 8), dtype="<f8").reshape(shape).copy()


def load_model(path) -> CascadeModel:
    reader = _Reader(Path(path).read_bytes())
    if reader.take(len(MAGIC)) != MAGIC:
        raise ModelFormatError(f"{path}: not a model file (bad magic)")
    (version,) = struct.unpack("<I", reader.take(4))
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"{path}: unsupported format version {version}")
    fields = reader.unpack(_CONFIG_STRUCT)
    (
        stages, landmarks, trees, depth, encoding_code, idf_k, achievable,
        candidates_per_landmark, train_inits, ridge_lambda, seed,
        candidates_per_node, thresholds_per_candidate, min_samples, bagging,
    ) = fields
    if encoding_code not in _ENCODING_FROM_CODE:
        raise ModelFormatError(f"{path}: unknown encoding code {encoding_code}")
    radius_schedule = tuple(float(v) for v in reader.f64((stages,)))
    config = CascadeConfig(
        stages=stages,
        landmarks=landmarks,
        trees_per_forest=trees,
        depth=depth,
        idf_k=idf_k,
        encoding=_ENCODING_FROM_CODE[encoding_code],
        radius_schedule=radius_schedule,
        ridge_lambda=ridge_lambda,
        candidates_per_landmark=candidates_per_landmark,
        train_inits_per_sample=train_inits,
        seed=seed,
        candidates_per_node=candidates_per_node,
        thresholds_per_candidate=thresholds_per_candidate,
        min_samples_per_node=min_samples,
        bagging_fraction=bagging,
        idf_achievable_range=bool(achievable),
    )
    mean_shape = reader.f64((landmarks, 2))
    (n_inits,) = struct.unpack("<I", reader.take(4))
    init_shapes = reader.f64((n_inits, landmarks, 2))
    n_internal = 2 ** (depth - 1) - 1
    n_leaves = 2 ** (depth - 1)
    p = config.feature_dim
    stage_models = []
    for stage_index in range(stages):
        candidate_sets = []
        forests = []
        for lm in range(landmarks):
            offsets = reader.f64((candidates_per_landmark, 2))
            candidate_sets.append(
                CandidateSet(offsets, radius_schedule[stage_index], lm, stage_index)
            )
            forest_trees = []
            for _ in range(trees):
                nodes = np.frombuffer(reader.take(n_internal * 12), dtype="<i4").reshape(n_internal, 3)
                forest_trees.append(
                    DecisionTree(
                        depth,
                        nodes[:, :2].astype(np.int32),
                        nodes[:, 2].astype(np.int32).copy(),
                        reader.f64((n_leaves, 2)),
                    )
                )
            forests.append(Forest(lm, forest_trees))
        weights = reader.f64((p, 2 * landmarks))
        bias = reader.f64((2 * landmarks,))
        stage_models.append(StageModel(candidate_sets, forests, LinearModel(weights, bias)))
    if reader.pos != len(reader.data):
        raise ModelFormatError(f"{path}: {len(reader.data) - reader.pos} trailing bytes")
    return CascadeModel(config, mean_shape, init_shapes, stage_models, format_version=version)
