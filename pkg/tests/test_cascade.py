import copy
from dataclasses import replace

import numpy as np
import pytest

from conftest import tiny_config, tiny_dataset, train_tiny

from idfalign.cascade import (
    CascadeConfig,
    fit,
    fit_trajectory,
    report_dimensions,
    train_cascade,
)
from idfalign.dataset import AnnotatedSample
from idfalign.encoding import EncodingKind
from idfalign.geometry import BoundingBox, NormalizationKind, alignment_error, denormalize_from_box
from idfalign.shape_init import InitSet, build_init_set


class TestTrainCascade:
    def test_zero_residual_dataset_trains_to_zero(self):
        rng = np.random.default_rng(0)
        shape_norm = rng.uniform(-0.8, 0.8, size=(6, 2))
        samples = []
        for i in range(8):
            box = BoundingBox(5 + 3 * i, 4 + 2 * i, 30 + i, 28 + i)
            gt = denormalize_from_box(shape_norm, box)
            image = rng.integers(0, 256, size=(80, 100)).astype(np.uint8)
            samples.append(AnnotatedSample(image, gt, box, source=f"z{i}"))
        init_set = InitSet(shape_norm[None, ...].copy(), np.zeros(1, dtype=np.int64))
        config = tiny_config(landmarks=6, stages=2)
        model, errors = train_cascade(samples, init_set, config)
        assert all(e < 1e-9 for e in errors)
        for stage in model.stages:
            assert np.linalg.norm(stage.linear.weights) < 1e-6
            assert np.linalg.norm(stage.linear.bias) < 1e-9

    def test_training_error_non_increasing_and_learns(self):
        samples, _, model, errors = train_tiny()
        assert len(errors) == model.config.stages + 1
        assert all(np.isfinite(errors))
        for a, b in zip(errors, errors[1:]):
            assert b <= a * (1 + 1e-9)
        assert errors[-1] < 0.6 * errors[0]

    def test_two_stage_training_composes_from_single_stages(self):
        samples = tiny_dataset(count=10, landmarks=6, seed=21)
        config2 = tiny_config(landmarks=6, stages=2)
        rng = np.random.default_rng(0)
        init_set = build_init_set(
            [s.shape for s in samples], [s.box for s in samples], n_clusters=2, count=3, rng=rng
        )
        model_full, _ = train_cascade(samples, init_set, config2)

        config_a = tiny_config(landmarks=6, stages=1, radius_schedule=config2.radius_schedule[:1])
        model_a, _ = train_cascade(samples, init_set, config_a)
        # Shapes after stage 1, reconstructed through the public fitting path.
        after_stage1 = np.stack(
            [
                fit_trajectory(
                    model_a, s.image, s.box, init_shape=init_set.shapes[i % len(init_set)]
                )[-1]
                for i, s in enumerate(samples)
            ]
        )
        config_b = tiny_config(landmarks=6, stages=1, radius_schedule=config2.radius_schedule[1:])
        model_b, _ = train_cascade(
            samples, init_set, config_b, stage_offset=1, initial_shapes=after_stage1
        )

        full_stage2 = model_full.stages[1]
        composed_stage = model_b.stages[0]
        for fa, fb in zip(full_stage2.forests, composed_stage.forests):
            for ta, tb in zip(fa.trees, fb.trees):
                assert ta.pairs.tobytes() == tb.pairs.tobytes()
                assert ta.thresholds.tobytes() == tb.thresholds.tobytes()
                assert ta.leaves.tobytes() == tb.leaves.tobytes()
        assert full_stage2.linear.weights.tobytes() == composed_stage.linear.weights.tobytes()
        assert full_stage2.linear.bias.tobytes() == composed_stage.linear.bias.tobytes()

    def test_empty_dataset_raises(self):
        init_set = InitSet(np.zeros((1, 6, 2)), np.zeros(1, dtype=np.int64))
        with pytest.raises(ValueError):
            train_cascade([], init_set, tiny_config(landmarks=6))

    def test_landmark_mismatch_raises(self):
        samples = tiny_dataset(count=4, landmarks=8)
        init_set = InitSet(np.zeros((1, 10, 2)), np.zeros(1, dtype=np.int64))
        with pytest.raises(ValueError, match="landmark"):
            train_cascade(samples, init_set, tiny_config(landmarks=10))

    def test_multiple_inits_expand_instances(self):
        samples = tiny_dataset(count=6, landmarks=6, seed=30)
        rng = np.random.default_rng(1)
        init_set = build_init_set(
            [s.shape for s in samples], [s.box for s in samples], n_clusters=2, count=4, rng=rng
        )
        config = tiny_config(landmarks=6, stages=1, train_inits_per_sample=3)
        model, errors = train_cascade(samples, init_set, config)
        assert np.isfinite(errors).all()


class TestFit:
    def test_zero_linear_stages_return_placed_mean_shape(self, tiny_trained):
        _, _, model, _ = tiny_trained
        zeroed = copy.deepcopy(model)
        for stage in zeroed.stages:
            stage.linear.weights[:] = 0.0
            stage.linear.bias[:] = 0.0
        box = BoundingBox(10, 12, 33, 29)
        image = np.random.default_rng(2).integers(0, 256, size=(64, 64)).astype(np.uint8)
        out = fit(zeroed, image, box)
        assert np.array_equal(out, denormalize_from_box(zeroed.mean_shape, box))

    def test_truncated_fit_matches_trajectory(self, tiny_trained):
        samples, _, model, _ = tiny_trained
        s = samples[0]
        trajectory = fit_trajectory(model, s.image, s.box)
        assert len(trajectory) == model.config.stages + 1
        for t in range(model.config.stages + 1):
            assert np.array_equal(fit(model, s.image, s.box, stages=t), trajectory[t])

    def test_zero_stages_is_placed_initialization(self, tiny_trained):
        samples, _, model, _ = tiny_trained
        s = samples[0]
        out = fit(model, s.image, s.box, stages=0)
        assert np.array_equal(out, denormalize_from_box(model.mean_shape, s.box))

    def test_fit_improves_on_held_out_samples(self, tiny_trained):
        samples, _, model, _ = tiny_trained
        held_out = tiny_dataset(count=8, landmarks=10, seed=99)
        norm = NormalizationKind.BOX_DIAGONAL
        baseline, fitted = [], []
        for s in held_out:
            baseline.append(
                alignment_error(denormalize_from_box(model.mean_shape, s.box), s.shape, norm)
            )
            fitted.append(alignment_error(fit(model, s.image, s.box), s.shape, norm))
        assert np.mean(fitted) < np.mean(baseline)

    def test_multi_init_is_median_of_runs(self, tiny_trained):
        samples, _, model, _ = tiny_trained
        s = samples[2]
        runs = np.stack(
            [fit_trajectory(model, s.image, s.box, init_shape=init)[-1] for init in model.init_shapes]
        )
        expected = np.median(runs, axis=0)
        assert np.array_equal(fit(model, s.image, s.box, multi_init=True), expected)

    def test_pose_equivariance_under_integral_translation(self, tiny_trained):
        samples, _, model, _ = tiny_trained
        s = samples[1]
        pad, dx, dy = 48, 7, 11
        h, w = s.image.shape
        canvas1 = np.zeros((h + 2 * pad, w + 2 * pad), dtype=np.uint8)
        canvas2 = np.zeros_like(canvas1)
        canvas1[pad : pad + h, pad : pad + w] = s.image
        canvas2[pad + dy : pad + dy + h, pad + dx : pad + dx + w] = s.image
        box1 = BoundingBox(s.box.x + pad, s.box.y + pad, s.box.width, s.box.height)
        box2 = BoundingBox(box1.x + dx, box1.y + dy, box1.width, box1.height)
        fit1 = fit(model, canvas1, box1)
        fit2 = fit(model, canvas2, box2)
        assert np.allclose(fit1 + np.array([dx, dy]), fit2, atol=1e-6)

    def test_concurrent_fitting_matches_serial(self, tiny_trained):
        # A fitted model is immutable shared state; parallel workers must
        # reproduce the serial results exactly.
        from concurrent.futures import ThreadPoolExecutor

        samples, _, model, _ = tiny_trained
        serial = [fit(model, s.image, s.box) for s in samples]
        with ThreadPoolExecutor(max_workers=4) as pool:
            parallel = list(pool.map(lambda s: fit(model, s.image, s.box), samples))
        for a, b in zip(serial, parallel):
            assert a.tobytes() == b.tobytes()

    def test_partially_trained_model_rejected(self, tiny_trained):
        _, _, model, _ = tiny_trained
        broken = copy.deepcopy(model)
        broken.stages[0].linear = None
        s_box = BoundingBox(0, 0, 10, 10)
        with pytest.raises(ValueError, match="partial"):
            fit(broken, np.zeros((32, 32), dtype=np.uint8), s_box)


class TestReportDimensions:
    def test_reference_dimensionalities(self):
        idf = CascadeConfig(stages=7, landmarks=68, trees_per_forest=10, depth=7)
        lbf = replace_encoding(idf, EncodingKind.LBF)
        r_idf = report_dimensions(idf)
        r_lbf = report_dimensions(lbf)
        assert r_idf.feature_dim == 680
        assert r_lbf.feature_dim == 43_520
        assert r_lbf.feature_dim == 64 * r_idf.feature_dim
        assert r_lbf.linear_weight_parameters == 64 * r_idf.linear_weight_parameters

    def test_tiny_lbf_dimension(self):
        config = CascadeConfig(stages=1, landmarks=1, trees_per_forest=1, depth=2, encoding=EncodingKind.LBF)
        assert report_dimensions(config).feature_dim == 2

    def test_parameter_count_formula(self):
        config = CascadeConfig(stages=3, landmarks=5, trees_per_forest=4, depth=3)
        r = report_dimensions(config)
        p = 5 * 4
        expected_linear = 3 * (p + 1) * 10
        expected_forest_nodes = 3 * 5 * 4 * (2**3 - 1)
        assert r.parameter_count == expected_linear + expected_forest_nodes
        assert r.linear_weight_parameters == 3 * p * 10

    def test_estimated_bytes_match_actual_file(self, tiny_trained, tmp_path):
        from idfalign.serialize import save_model

        _, _, model, _ = tiny_trained
        path = tmp_path / "m.bin"
        save_model(model, path)
        r = report_dimensions(model.config, model.init_shapes.shape[0])
        assert r.estimated_model_bytes == path.stat().st_size


def replace_encoding(config: CascadeConfig, kind: EncodingKind) -> CascadeConfig:
    return replace(config, encoding=kind)
