"""Scikit-learn style estimator wrapping the cascade.

`X` is a sequence of AnnotatedSample (boxes and, for fitting, ground-truth
shapes included) or a sequence of (image, box) pairs with `y` an
(n, landmarks, 2) array of shapes. The estimator plays nicely with
`sklearn.base.clone` and `get_params`/`set_params`.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import cascade
from .dataset import AnnotatedSample
from .geometry import BoundingBox, NormalizationKind, alignment_error
from .shape_init import build_init_set
from .validation import as_image, as_points


def _split_input(X, y=None):
    images, boxes, shapes = [], [], []
    for i, item in enumerate(X):
        if isinstance(item, AnnotatedSample):
            images.append(item.image)
            boxes.append(item.box)
            shapes.append(item.shape)
        else:
            image, box = item
            if not isinstance(box, BoundingBox):
                box = BoundingBox(*box)
            images.append(as_image(image))
            boxes.append(box)
            shapes.append(None if y is None else as_points(y[i]))
    return images, boxes, shapes


class CascadeForestAligner(BaseEstimator):
    """Cascaded random-forest landmark aligner with a fit/predict surface."""

    def __init__(
        self,
        stages: int = 7,
        landmarks: int = 68,
        trees_per_forest: int = 11,
        depth: int = 7,
        idf_k: int = 10,
        encoding: str = "idf",
        radius_schedule=None,
        ridge_lambda: float = 1.0,
        candidates_per_landmark: int = 500,
        train_inits_per_sample: int = 1,
        n_shape_clusters: int = 7,
        n_init_shapes: int = 50,
        candidates_per_node: int = 50,
        thresholds_per_candidate: int = 1,
        min_samples_per_node: int = 5,
        bagging_fraction: float = 0.8,
        idf_achievable_range: bool = False,
        error_norm: str = "boxdiag",
        seed: int = 0,
    ):
        self.stages = stages
        self.landmarks = landmarks
        self.trees_per_forest = trees_per_forest
        self.depth = depth
        self.idf_k = idf_k
        self.encoding = encoding
        self.radius_schedule = radius_schedule
        self.ridge_lambda = ridge_lambda
        self.candidates_per_landmark = candidates_per_landmark
        self.train_inits_per_sample = train_inits_per_sample
        self.n_shape_clusters = n_shape_clusters
        self.n_init_shapes = n_init_shapes
        self.candidates_per_node = candidates_per_node
        self.thresholds_per_candidate = thresholds_per_candidate
        self.min_samples_per_node = min_samples_per_node
        self.bagging_fraction = bagging_fraction
        self.idf_achievable_range = idf_achievable_range
        self.error_norm = error_norm
        self.seed = seed

    def _config(self) -> cascade.CascadeConfig:
        return cascade.CascadeConfig(
            stages=self.stages,
            landmarks=self.landmarks,
            trees_per_forest=self.trees_per_forest,
            depth=self.depth,
            idf_k=self.idf_k,
            encoding=self.encoding,
            radius_schedule=self.radius_schedule,
            ridge_lambda=self.ridge_lambda,
            candidates_per_landmark=self.candidates_per_landmark,
            train_inits_per_sample=self.train_inits_per_sample,
            seed=self.seed,
            candidates_per_node=self.candidates_per_node,
            thresholds_per_candidate=self.thresholds_per_candidate,
            min_samples_per_node=self.min_samples_per_node,
            bagging_fraction=self.bagging_fraction,
            idf_achievable_range=self.idf_achievable_range,
        )

    def fit(self, X, y=None):
        images, boxes, shapes = _split_input(X, y)
        if any(s is None for s in shapes):
            raise ValueError("fitting requires ground-truth shapes (AnnotatedSample input or y)")
        samples = [
            AnnotatedSample(img, shp, box, source=f"train/{i}")
            for i, (img, box, shp) in enumerate(zip(images, boxes, shapes))
        ]
        config = self._config()
        rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(4,)))
        init_set = build_init_set(
            [s.shape for s in samples],
            [s.box for s in samples],
            n_clusters=self.n_shape_clusters,
            count=self.n_init_shapes,
            rng=rng,
        )
        self.model_, self.train_errors_ = cascade.train_cascade(
            samples, init_set, config, error_norm=NormalizationKind(self.error_norm)
        )
        return self

    def _check_fitted(self) -> cascade.CascadeModel:
        model = getattr(self, "model_", None)
        if model is None:
            raise NotFittedError("this CascadeForestAligner instance is not fitted yet")
        return model

    def predict(self, X, multi_init: bool = False) -> np.ndarray:
        model = self._check_fitted()
        images, boxes, _ = _split_input(X)
        return np.stack(
            [cascade.fit(model, img, box, multi_init=multi_init) for img, box in zip(images, boxes)]
        )

    def score(self, X, y=None) -> float:
        """Negative mean alignment error (higher is better)."""
        model = self._check_fitted()
        images, boxes, shapes = _split_input(X, y)
        if any(s is None for s in shapes):
            raise ValueError("scoring requires ground-truth shapes")
        norm = NormalizationKind(self.error_norm)
        errors = [
            alignment_error(cascade.fit(model, img, box), truth, norm)
            for img, box, truth in zip(images, boxes, shapes)
        ]
        return -float(np.mean(errors))
