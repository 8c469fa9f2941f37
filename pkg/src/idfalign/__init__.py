"""Cascaded random-forest face alignment with compact leaf-path features."""

from .cascade import (
    CascadeConfig,
    CascadeModel,
    DimensionReport,
    StageModel,
    fit,
    fit_trajectory,
    report_dimensions,
    train_cascade,
)
from .dataset import AnnotatedSample, derive_bbox, load_image, load_manifest, parse_pts, write_pts
from .encoding import (
    EncodingKind,
    IdfParams,
    build_feature_vector,
    encode_index,
    encode_lbf,
    feature_dimension,
    idf_range,
    idf_value,
    normalize_idf,
)
from .estimator import CascadeForestAligner
from .features import CandidateSet, pixel_diff, sample_candidates
from .forest import (
    DecisionTree,
    Forest,
    ForestTrainConfig,
    forest_predict,
    route,
    split_score,
    train_forest,
    train_tree,
    train_tree_from_samples,
)
from .geometry import (
    BoundingBox,
    NormalizationKind,
    SimilarityTransform,
    alignment_error,
    compute_mean_shape,
    denormalize_from_box,
    estimate_similarity,
    normalize_to_box,
)
from .ridge import LinearModel, RidgeConfig, fit_ridge, predict
from .serialize import ModelFormatError, load_model, save_model
from .shape_init import InitSet, ShapeCluster, build_init_set, kmeans_shapes, select_initializations
from .synthetic import SyntheticConfig, export_dataset, face_template, generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "AnnotatedSample",
    "BoundingBox",
    "CandidateSet",
    "CascadeConfig",
    "CascadeForestAligner",
    "CascadeModel",
    "DecisionTree",
    "DimensionReport",
    "EncodingKind",
    "Forest",
    "ForestTrainConfig",
    "IdfParams",
    "InitSet",
    "LinearModel",
    "ModelFormatError",
    "NormalizationKind",
    "RidgeConfig",
    "ShapeCluster",
    "SimilarityTransform",
    "StageModel",
    "SyntheticConfig",
    "alignment_error",
    "build_feature_vector",
    "build_init_set",
    "compute_mean_shape",
    "denormalize_from_box",
    "derive_bbox",
    "encode_index",
    "encode_lbf",
    "estimate_similarity",
    "export_dataset",
    "face_template",
    "feature_dimension",
    "fit",
    "fit_ridge",
    "fit_trajectory",
    "forest_predict",
    "generate_synthetic",
    "idf_range",
    "idf_value",
    "kmeans_shapes",
    "load_image",
    "load_manifest",
    "load_model",
    "normalize_idf",
    "normalize_to_box",
    "parse_pts",
    "pixel_diff",
    "predict",
    "report_dimensions",
    "route",
    "sample_candidates",
    "save_model",
    "select_initializations",
    "split_score",
    "train_cascade",
    "train_forest",
    "train_tree",
    "train_tree_from_samples",
    "write_pts",
]
