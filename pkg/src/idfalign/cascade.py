"""End-to-end cascade training and fitting.

Each stage trains one regression forest per landmark on the current
residuals, encodes every training instance's leaf pattern into a global
feature vector, fits one ridge regressor from features to the full residual,
and applies the predicted increments. Residuals, candidate offsets, and
regressor outputs all live in the mean-shape-aligned normalized frame; the
per-instance similarity to the mean shape carries them to and from the image
frame, which is what makes the features pose-indexed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse

from . import ridge
from .encoding import EncodingKind, IdfParams, encode_leaf_matrix, feature_dimension
from .features import CandidateSet, check_radius_schedule, default_radius_schedule, sample_candidates
from .forest import Forest, ForestTrainConfig, train_forest
from .geometry import (
    BoundingBox,
    NormalizationKind,
    alignment_error,
    compute_mean_shape,
    denormalize_from_box,
    estimate_similarity,
)
from .shape_init import InitSet
from .validation import as_image, as_points

FORMAT_VERSION = 1

# Seed-sequence spawn tags keeping the independent random streams apart.
_SEED_CANDIDATES = 1
_SEED_TREES = 2


@dataclass
class CascadeConfig:
    stages: int = 7
    landmarks: int = 68
    trees_per_forest: int = 11
    depth: int = 7
    idf_k: int = 10
    encoding: EncodingKind = EncodingKind.IDF
    radius_schedule: tuple[float, ...] | None = None
    ridge_lambda: float = 1.0
    candidates_per_landmark: int = 500
    train_inits_per_sample: int = 1
    seed: int = 0
    candidates_per_node: int = 50
    thresholds_per_candidate: int = 1
    min_samples_per_node: int = 5
    bagging_fraction: float = 0.8
    idf_achievable_range: bool = False

    def __post_init__(self):
        self.encoding = EncodingKind(self.encoding)
        for name in ("stages", "landmarks", "trees_per_forest", "candidates_per_landmark", "train_inits_per_sample"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.depth < 2:
            raise ValueError("depth must be >= 2")
        if self.idf_k < 2:
            raise ValueError("idf_k must be >= 2")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")
        if self.ridge_lambda < 0:
            raise ValueError("ridge_lambda must be >= 0")
        if self.radius_schedule is None:
            self.radius_schedule = default_radius_schedule(self.stages)
        self.radius_schedule = check_radius_schedule(self.radius_schedule, self.stages)

    @property
    def forest_config(self) -> ForestTrainConfig:
        return ForestTrainConfig(
            depth=self.depth,
            trees=self.trees_per_forest,
            candidates_per_node=self.candidates_per_node,
            thresholds_per_candidate=self.thresholds_per_candidate,
            min_samples_per_node=self.min_samples_per_node,
            bagging_fraction=self.bagging_fraction,
        )

    @property
    def idf_params(self) -> IdfParams:
        return IdfParams(self.idf_k, self.idf_achievable_range)

    @property
    def feature_dim(self) -> int:
        return feature_dimension(self.encoding, self.landmarks, self.trees_per_forest, self.depth)


@dataclass(eq=False)
class StageModel:
    candidates: list[CandidateSet]  # one per landmark
    forests: list[Forest]  # one per landmark
    linear: ridge.LinearModel | None = None  # None only mid-training


@dataclass(eq=False)
class CascadeModel:
    config: CascadeConfig
    mean_shape: np.ndarray  # (landmarks, 2) normalized frame
    init_shapes: np.ndarray  # (m, landmarks, 2) normalized frame
    stages: list[StageModel] = field(default_factory=list)
    format_version: int = FORMAT_VERSION


@dataclass(frozen=True)
class DimensionReport:
    feature_dim: int
    parameter_count: int  # regressor parameters (bias included) plus forest node count
    linear_weight_parameters: int  # regressor weights only, bias excluded
    estimated_model_bytes: int


@dataclass(eq=False)
class _StageArrays:
    """Per-stage routing tables over the candidates the trees actually read.

    Candidate slots used by any split are concatenated landmark by landmark
    into one flat table, and every tree's pair indices are remapped into that
    table, so fitting gathers and routes without touching unused candidates.
    """

    flat_offsets: np.ndarray  # (used, 2) float64, normalized frame
    flat_offsets_t: np.ndarray  # (2, used) contiguous transpose, fit hot path
    flat_landmark: np.ndarray  # (used,) landmark per slot
    flat_orig: np.ndarray  # (used,) original candidate index per slot
    pairs_first: np.ndarray  # (l*t, n_internal) int32, flat-slot indices
    pairs_second: np.ndarray  # (l*t, n_internal) int32
    thresholds: np.ndarray  # (l*t, n_internal) int32
    n_internal: int
    depth: int


def _stage_arrays(stage: StageModel) -> _StageArrays:
    # Lazily built and idempotent: concurrent first use may build the tables
    # twice, but every build is identical and assignment is atomic.
    cached = getattr(stage, "_arrays", None)
    if cached is not None:
        return cached
    flat_offsets, flat_landmark, flat_orig = [], [], []
    pairs_first, pairs_second, thresholds = [], [], []
    base = 0
    for lm, (candidates, forest) in enumerate(zip(stage.candidates, stage.forests)):
        used = np.unique(np.concatenate([t.pairs.ravel() for t in forest.trees]))
        flat_offsets.append(candidates.offsets[used])
        flat_landmark.append(np.full(used.shape[0], lm, dtype=np.int64))
        flat_orig.append(used)
        for tree in forest.trees:
            pairs_first.append(base + np.searchsorted(used, tree.pairs[:, 0]).astype(np.int32))
            pairs_second.append(base + np.searchsorted(used, tree.pairs[:, 1]).astype(np.int32))
            thresholds.append(tree.thresholds)
        base += used.shape[0]
    tree0 = stage.forests[0].trees[0]
    offsets = np.concatenate(flat_offsets)
    cached = _StageArrays(
        flat_offsets=offsets,
        flat_offsets_t=np.ascontiguousarray(offsets.T),
        flat_landmark=np.concatenate(flat_landmark),
        flat_orig=np.concatenate(flat_orig),
        pairs_first=np.stack(pairs_first),
        pairs_second=np.stack(pairs_second),
        thresholds=np.stack(thresholds),
        n_internal=tree0.n_internal,
        depth=tree0.depth,
    )
    stage._arrays = cached
    return cached


def _gather_used(image: np.ndarray, shape: np.ndarray, arrays: _StageArrays, linear: np.ndarray) -> np.ndarray:
    """Intensities (uint8) at every used candidate slot for one image."""
    pos = linear @ arrays.flat_offsets_t
    px, py = pos
    px += shape[arrays.flat_landmark, 0]
    py += shape[arrays.flat_landmark, 1]
    cols = np.clip(np.rint(px, out=px).astype(np.int64), 0, image.shape[1] - 1)
    rows = np.clip(np.rint(py, out=py).astype(np.int64), 0, image.shape[0] - 1)
    return image[rows, cols]


def _gather_intensities(image: np.ndarray, shape: np.ndarray, offsets: np.ndarray, linear: np.ndarray) -> np.ndarray:
    """(l, c) candidate intensities for one image under one similarity."""
    pos = offsets @ linear.T + shape[:, None, :]
    cols = np.clip(np.rint(pos[..., 0]).astype(np.int64), 0, image.shape[1] - 1)
    rows = np.clip(np.rint(pos[..., 1]).astype(np.int64), 0, image.shape[0] - 1)
    return image[rows, cols].astype(np.int16)


def _route_single(arrays: _StageArrays, values_flat: np.ndarray) -> np.ndarray:
    """Leaf per tree for one image's flat slot intensities -> (l*t,)."""
    n_trees = arrays.pairs_first.shape[0]
    tree_ids = np.arange(n_trees)
    node = np.zeros(n_trees, dtype=np.int64)
    values = values_flat.astype(np.int32)
    for _ in range(arrays.depth - 1):
        feat = values[arrays.pairs_first[tree_ids, node]] - values[arrays.pairs_second[tree_ids, node]]
        node = 2 * node + 1 + (feat >= arrays.thresholds[tree_ids, node])
    return node - arrays.n_internal


def _route_batch(arrays: _StageArrays, values: np.ndarray) -> np.ndarray:
    """Leaf per tree over a (n, l, c) full intensity batch -> (n, l*t)."""
    values_flat = values[:, arrays.flat_landmark, arrays.flat_orig].astype(np.int32)
    n = values_flat.shape[0]
    n_trees = arrays.pairs_first.shape[0]
    rows = np.arange(n)[:, None]
    tree_ids = np.arange(n_trees)[None, :]
    node = np.zeros((n, n_trees), dtype=np.int64)
    for _ in range(arrays.depth - 1):
        feat = values_flat[rows, arrays.pairs_first[tree_ids, node]] - values_flat[
            rows, arrays.pairs_second[tree_ids, node]
        ]
        node = 2 * node + 1 + (feat >= arrays.thresholds[tree_ids, node])
    return node - arrays.n_internal


def _stage_features(leaves: np.ndarray, config: CascadeConfig):
    """Training feature matrix; sparse for the one-hot LBF encoding."""
    if config.encoding == EncodingKind.LBF:
        n, n_trees = leaves.shape
        leaves_per_tree = 2 ** (config.depth - 1)
        cols = (np.arange(n_trees)[None, :] * leaves_per_tree + leaves).ravel()
        rows = np.repeat(np.arange(n), n_trees)
        data = np.ones(cols.shape[0])
        return scipy.sparse.csr_matrix(
            (data, (rows, cols)), shape=(n, n_trees * leaves_per_tree)
        )
    return encode_leaf_matrix(leaves, config.depth, config.encoding, config.idf_params)


@lru_cache(maxsize=64)
def _leaf_code_table(depth: int, kind: EncodingKind, k: int, achievable: bool) -> np.ndarray | None:
    """Per-leaf scalar code for the non-one-hot encodings.

    The code is a pure function of the leaf index at a fixed depth, so a
    2^(depth-1)-entry table replaces per-sample digit arithmetic at fit time.
    """
    if kind == EncodingKind.LBF:
        return None
    all_leaves = np.arange(2 ** (depth - 1))
    table = encode_leaf_matrix(all_leaves[None, :], depth, kind, IdfParams(k, achievable))[0]
    table.setflags(write=False)
    return table


def _predict_stage(stage: StageModel, leaves_row: np.ndarray, config: CascadeConfig) -> np.ndarray:
    """Fast per-sample regressor application; LBF goes through the active rows only."""
    model = stage.linear
    if config.encoding == EncodingKind.LBF:
        leaves_per_tree = 2 ** (config.depth - 1)
        active = np.arange(leaves_row.shape[0]) * leaves_per_tree + leaves_row
        return model.weights[active].sum(axis=0) + model.bias
    table = _leaf_code_table(config.depth, config.encoding, config.idf_k, config.idf_achievable_range)
    return table[leaves_row] @ model.weights + model.bias


def _build_instances(dataset, init_set: InitSet, config: CascadeConfig):
    samples = list(dataset)
    if not samples:
        raise ValueError("cannot train on an empty dataset")
    if len(init_set) < 1:
        raise ValueError("init_set is empty")
    truths, boxes, images = [], [], []
    for sample in samples:
        pts = as_points(sample.shape)
        if pts.shape[0] != config.landmarks:
            raise ValueError(
                f"sample {sample.source!r} has {pts.shape[0]} landmarks, config expects {config.landmarks}"
            )
        truths.append(pts)
        boxes.append(sample.box)
        images.append(as_image(sample.image))
    m = config.train_inits_per_sample
    n_inits = len(init_set)
    inst_sample, inst_current = [], []
    for i in range(len(samples)):
        for j in range(m):
            init = init_set.shapes[(i * m + j) % n_inits]
            inst_sample.append(i)
            inst_current.append(denormalize_from_box(init, boxes[i]))
    return images, truths, boxes, np.asarray(inst_sample), np.stack(inst_current)


def train_cascade(
    dataset,
    init_set: InitSet,
    config: CascadeConfig,
    error_norm: NormalizationKind = NormalizationKind.BOX_DIAGONAL,
    stage_offset: int = 0,
    initial_shapes: np.ndarray | None = None,
) -> tuple[CascadeModel, list[float]]:
    """Train all stages; returns the model and the mean training error per stage.

    The error list has stages+1 entries; entry 0 is the initialization
    baseline. `stage_offset` and `initial_shapes` allow resuming training
    from intermediate shapes with the stage numbering (and therefore the
    seeding) of a longer cascade; they exist for composition tests and
    staged experiments.
    """
    if init_set.shapes.ndim != 3 or init_set.shapes.shape[1] != config.landmarks:
        raise ValueError("init_set landmarks do not match the config")
    images, truths, boxes, inst_sample, current = _build_instances(dataset, init_set, config)
    if initial_shapes is not None:
        initial_shapes = np.asarray(initial_shapes, dtype=np.float64)
        if initial_shapes.shape != current.shape:
            raise ValueError(f"initial_shapes must have shape {current.shape}")
        current = initial_shapes.copy()
    mean_shape = compute_mean_shape(truths, boxes)
    n = current.shape[0]
    l = config.landmarks

    def mean_error() -> float:
        return float(
            np.mean(
                [alignment_error(current[i], truths[inst_sample[i]], error_norm) for i in range(n)]
            )
        )

    errors = [mean_error()]
    stage_models = []
    ridge_config = ridge.RidgeConfig(config.ridge_lambda)
    for local_stage in range(config.stages):
        stage_index = stage_offset + local_stage
        radius = config.radius_schedule[local_stage]
        candidates = [
            sample_candidates(
                np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(_SEED_CANDIDATES, stage_index, lm))),
                radius,
                config.candidates_per_landmark,
                landmark_index=lm,
                stage_index=stage_index,
            )
            for lm in range(l)
        ]
        offsets = np.stack([c.offsets for c in candidates])

        linears = np.empty((n, 2, 2))
        values = np.empty((n, l, config.candidates_per_landmark), dtype=np.int16)
        residual_norm = np.empty((n, l, 2))
        for i in range(n):
            transform = estimate_similarity(mean_shape, current[i])
            lin = transform.linear
            linears[i] = lin
            values[i] = _gather_intensities(images[inst_sample[i]], current[i], offsets, lin)
            residual_norm[i] = (truths[inst_sample[i]] - current[i]) @ np.linalg.inv(lin).T

        forests = [
            train_forest(
                values[:, lm, :],
                residual_norm[:, lm, :],
                config.forest_config,
                np.random.SeedSequence(config.seed, spawn_key=(_SEED_TREES, stage_index, lm)),
                landmark_index=lm,
            )
            for lm in range(l)
        ]
        stage = StageModel(candidates, forests, linear=None)
        leaves = _route_batch(_stage_arrays(stage), values)
        features = _stage_features(leaves, config)
        stage.linear = ridge.fit_ridge(features, residual_norm.reshape(n, 2 * l), ridge_config)

        # Per-instance prediction through the same path fit() uses, so that
        # staged training and fitting stay bit-identical.
        for i in range(n):
            delta = _predict_stage(stage, leaves[i], config).reshape(l, 2)
            current[i] = current[i] + delta @ linears[i].T
        stage_models.append(stage)
        errors.append(mean_error())

    model = CascadeModel(config, mean_shape, init_set.shapes.copy(), stage_models)
    return model, errors


def fit_trajectory(
    model: CascadeModel,
    image: np.ndarray,
    box: BoundingBox,
    init_shape: np.ndarray | None = None,
    stages: int | None = None,
) -> list[np.ndarray]:
    """Shape estimate after every stage (entry 0 is the placed initialization).

    Passing stages=0 returns just the placed initialization, the degenerate
    cascade with no increments applied.
    """
    img = as_image(image)
    config = model.config
    if init_shape is None:
        init_shape = model.mean_shape
    limit = len(model.stages) if stages is None else max(0, min(stages, len(model.stages)))
    current = denormalize_from_box(init_shape, box)
    trajectory = [current]
    for stage in model.stages[:limit]:
        if stage.linear is None:
            raise ValueError("model has a partially trained stage")
        arrays = _stage_arrays(stage)
        transform = estimate_similarity(model.mean_shape, current)
        lin = transform.linear
        values = _gather_used(img, current, arrays, lin)
        leaves = _route_single(arrays, values)
        delta = _predict_stage(stage, leaves, config).reshape(config.landmarks, 2)
        current = current + delta @ lin.T
        trajectory.append(current)
    return trajectory


def fit(
    model: CascadeModel,
    image: np.ndarray,
    box: BoundingBox,
    multi_init: bool = False,
    stages: int | None = None,
) -> np.ndarray:
    """Run the cascade from the mean shape; with multi_init, take the
    coordinate-wise median over a run from every stored initialization."""
    if not multi_init:
        return fit_trajectory(model, image, box, stages=stages)[-1]
    runs = [
        fit_trajectory(model, image, box, init_shape=init, stages=stages)[-1]
        for init in model.init_shapes
    ]
    return np.median(np.stack(runs), axis=0)


def report_dimensions(config: CascadeConfig, n_init_shapes: int = 1) -> DimensionReport:
    """Feature dimension, parameter count, and serialized size for a config."""
    from .serialize import model_nbytes

    p = config.feature_dim
    targets = 2 * config.landmarks
    nodes_per_tree = 2**config.depth - 1
    forest_nodes = config.stages * config.landmarks * config.trees_per_forest * nodes_per_tree
    return DimensionReport(
        feature_dim=p,
        parameter_count=config.stages * (p + 1) * targets + forest_nodes,
        linear_weight_parameters=config.stages * p * targets,
        estimated_model_bytes=model_nbytes(config, n_init_shapes),
    )
