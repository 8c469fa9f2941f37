"""Command-line interface: train, fit, eval, bench, sweep-k, synth, inspect.

Every command is deterministic under a fixed --seed (bench wall-clock fields
aside). Reports are CSV; images and landmarks use the dataset-io formats.
"""
from __future__ import annotations

import argparse
import os
import statistics
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import cascade, reports
from .dataset import derive_bbox, load_image, load_manifest, parse_pts, save_png, write_pts
from .encoding import EncodingKind
from .geometry import BoundingBox, NormalizationKind, alignment_error, normalizing_distance
from .serialize import load_model, save_model
from .shape_init import build_init_set
from .synthetic import SyntheticConfig, export_dataset, generate_synthetic

SEED_ENV_VAR = "IDF_ALIGN_SEED"

_SYNTH_KEYS = {
    "n": ("count", int),
    "count": ("count", int),
    "landmarks": ("landmark_count", int),
    "size": ("image_size", int),
    "noise": ("background_noise_std", float),
    "blob": ("blob_radius", float),
    "landmark_noise": ("landmark_noise_std", float),
    "seed": ("seed", int),
}


def _parse_synth_spec(spec: str, default_seed: int) -> SyntheticConfig:
    kwargs = {"count": 100, "seed": default_seed}
    if spec:
        for part in spec.split(","):
            if not part:
                continue
            if "=" not in part:
                raise ValueError(f"bad synth option {part!r}; expected key=value")
            key, value = part.split("=", 1)
            key = key.strip()
            if key not in _SYNTH_KEYS:
                raise ValueError(f"unknown synth option {key!r} (known: {sorted(_SYNTH_KEYS)})")
            name, conv = _SYNTH_KEYS[key]
            kwargs[name] = conv(value)
    return SyntheticConfig(**kwargs)


def _parse_box(text: str) -> BoundingBox:
    parts = text.split(",")
    if len(parts) != 4:
        raise ValueError(f"--box expects x,y,w,h, got {text!r}")
    x, y, w, h = (float(p) for p in parts)
    return BoundingBox(x, y, w, h)


def _default_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV_VAR)
    return int(env) if env else 0


def _load_samples(args, seed: int):
    if getattr(args, "data", None):
        return load_manifest(args.data)
    if getattr(args, "synth", None) is not None:
        return generate_synthetic(_parse_synth_spec(args.synth, seed))
    raise ValueError("provide a dataset with --data or --synth")


def _cascade_config(args, seed: int) -> cascade.CascadeConfig:
    schedule = None
    if args.radius_schedule:
        schedule = tuple(float(v) for v in args.radius_schedule.split(","))
    return cascade.CascadeConfig(
        stages=args.stages,
        landmarks=args.landmarks,
        trees_per_forest=args.trees,
        depth=args.depth,
        idf_k=args.k,
        encoding=EncodingKind(args.encoding),
        radius_schedule=schedule,
        ridge_lambda=args.ridge_lambda,
        candidates_per_landmark=args.candidates,
        train_inits_per_sample=args.train_inits,
        seed=seed,
        idf_achievable_range=args.idf_achievable_range,
    )


def _add_cascade_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--stages", type=int, default=7)
    parser.add_argument("--landmarks", type=int, default=68)
    parser.add_argument("--trees", type=int, default=11)
    parser.add_argument("--depth", type=int, default=7)
    parser.add_argument("--k", type=int, default=10, help="IDF magnitude value")
    parser.add_argument("--encoding", choices=[e.value for e in EncodingKind], default="idf")
    parser.add_argument("--radius-schedule", default=None, help="comma-separated per-stage radii")
    parser.add_argument("--ridge-lambda", type=float, default=1.0)
    parser.add_argument("--candidates", type=int, default=500)
    parser.add_argument("--train-inits", type=int, default=1)
    parser.add_argument("--clusters", type=int, default=7, help="shape clusters for initialization")
    parser.add_argument("--inits", type=int, default=50, help="initialization shapes to keep")
    parser.add_argument("--idf-achievable-range", action="store_true")


def _add_data_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", default=None, help="dataset directory or CSV manifest")
    parser.add_argument("--synth", default=None, nargs="?", const="", metavar="SPEC",
                        help="synthetic dataset, e.g. n=200,seed=7")


def _train_model(samples, config: cascade.CascadeConfig, args, norm: NormalizationKind):
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(4,)))
    init_set = build_init_set(
        [s.shape for s in samples],
        [s.box for s in samples],
        n_clusters=args.clusters,
        count=args.inits,
        rng=rng,
    )
    return cascade.train_cascade(samples, init_set, config, error_norm=norm)


def cmd_train(args) -> int:
    seed = _default_seed(args)
    samples = _load_samples(args, seed)
    config = _cascade_config(args, seed)
    norm = NormalizationKind(args.norm)
    model, errors = _train_model(samples, config, args, norm)
    save_model(model, args.output)
    rows = [[stage, err] for stage, err in enumerate(errors)]
    if args.report:
        reports.write_csv(args.report, ["stage", "train_error"], rows)
    dims = cascade.report_dimensions(config, model.init_shapes.shape[0])
    print(f"trained {config.stages} stages on {len(samples)} samples -> {args.output}")
    print(f"feature_dim={dims.feature_dim} model_bytes={os.path.getsize(args.output)}")
    for stage, err in enumerate(errors):
        print(f"stage {stage}: train_error={err:.6f}")
    return 0


def _burn_overlay(image: np.ndarray, shape: np.ndarray) -> np.ndarray:
    out = image.copy()
    h, w = out.shape
    for x, y in shape:
        cx, cy = int(round(x)), int(round(y))
        for dy in range(-1, 2):
            for dx in range(-1, 2):
                px, py = cx + dx, cy + dy
                if 0 <= px < w and 0 <= py < h:
                    out[py, px] = 255
    return out


def cmd_fit(args) -> int:
    model = load_model(args.model)
    image = load_image(args.image)
    if args.box:
        box = _parse_box(args.box)
    elif args.pts:
        box = derive_bbox(parse_pts(Path(args.pts).read_text()), padding_fraction=0.05)
    else:
        raise ValueError("no face box: pass --box x,y,w,h or --pts landmarks.pts")
    fitted = cascade.fit(model, image, box, multi_init=args.multi_init, stages=args.stages)
    write_pts(fitted, args.output)
    print(f"wrote {fitted.shape[0]} landmarks -> {args.output}")
    if args.overlay:
        save_png(_burn_overlay(image, fitted), args.overlay)
        print(f"wrote overlay -> {args.overlay}")
    return 0


def _evaluate(model, samples, norm: NormalizationKind):
    """Per-stage mean errors (stage 0 = placed mean shape) and per-landmark finals."""
    n_stages = len(model.stages)
    stage_errors = np.zeros(n_stages + 1)
    landmark_dists = np.zeros(model.config.landmarks)
    for sample in samples:
        trajectory = cascade.fit_trajectory(model, sample.image, sample.box)
        for t, estimate in enumerate(trajectory):
            stage_errors[t] += alignment_error(estimate, sample.shape, norm)
        final = trajectory[-1]
        denom = normalizing_distance(sample.shape, norm)
        landmark_dists += np.linalg.norm(final - sample.shape, axis=1) / denom
    stage_errors /= len(samples)
    landmark_dists /= len(samples)
    return stage_errors, landmark_dists


def cmd_eval(args) -> int:
    seed = _default_seed(args)
    model = load_model(args.model)
    samples = _load_samples(args, seed)
    norm = NormalizationKind(args.norm)
    stage_errors, landmark_errors = _evaluate(model, samples, norm)
    header = ["split", "overall"] + [f"stage_{t}" for t in range(len(stage_errors))]
    rows = [["eval", float(stage_errors[-1])] + [float(e) for e in stage_errors]]
    if args.report:
        reports.write_csv(args.report, header, rows)
    if args.per_landmark:
        reports.write_csv(
            args.per_landmark,
            ["landmark", "mean_error"],
            [[i, float(e)] for i, e in enumerate(landmark_errors)],
        )
    print(f"evaluated {len(samples)} samples ({norm.value} norm)")
    for t, err in enumerate(stage_errors):
        print(f"stage {t}: error={err:.6f}")
    return 0


def _timed_pass(model, samples, workers: int) -> float:
    start = time.perf_counter()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda s: cascade.fit(model, s.image, s.box), samples))
    else:
        for s in samples:
            cascade.fit(model, s.image, s.box)
    return (time.perf_counter() - start) / len(samples)


def _time_fits(models: dict, samples, repetitions: int, workers: int) -> dict:
    """Median seconds per image, passes interleaved across models so that

    thermal and frequency drift hit every model alike. One warm-up pass per
    model is excluded.
    """
    for model in models.values():
        _timed_pass(model, samples, workers)
    times = {name: [] for name in models}
    for _ in range(repetitions):
        for name, model in models.items():
            times[name].append(_timed_pass(model, samples, workers))
    return {name: statistics.median(values) for name, values in times.items()}


def _config_fields_excluding_encoding(config) -> dict:
    fields = vars(config).copy()
    fields.pop("encoding")
    return fields


def cmd_bench(args) -> int:
    seed = _default_seed(args)
    model_idf = load_model(args.idf)
    model_lbf = load_model(args.lbf)
    if model_idf.config.encoding != EncodingKind.IDF:
        raise ValueError(f"--idf model uses {model_idf.config.encoding.value} encoding")
    if model_lbf.config.encoding != EncodingKind.LBF:
        raise ValueError(f"--lbf model uses {model_lbf.config.encoding.value} encoding")
    if _config_fields_excluding_encoding(model_idf.config) != _config_fields_excluding_encoding(model_lbf.config):
        raise ValueError("models differ in more than the encoding; benchmark would be apples to oranges")
    samples = _load_samples(args, seed)
    rows = []
    header = [
        "encoding", "model_file_bytes", "linear_weight_params", "parameter_count",
        "seconds_per_image", "images_per_second",
    ]
    times = {}
    if args.repetitions > 0:
        times = _time_fits(
            {"idf": model_idf, "lbf": model_lbf}, samples, args.repetitions, args.parallel
        )
    for name, model, path in (("idf", model_idf, args.idf), ("lbf", model_lbf, args.lbf)):
        dims = cascade.report_dimensions(model.config, model.init_shapes.shape[0])
        row = [name, os.path.getsize(path), dims.linear_weight_parameters, dims.parameter_count]
        if times:
            row += [times[name], 1.0 / times[name]]
        else:
            row += ["", ""]
        rows.append(row)
    dims_idf = cascade.report_dimensions(model_idf.config, model_idf.init_shapes.shape[0])
    dims_lbf = cascade.report_dimensions(model_lbf.config, model_lbf.init_shapes.shape[0])
    ratio = dims_lbf.linear_weight_parameters / dims_idf.linear_weight_parameters
    rows.append(["lbf_over_idf_weight_ratio", "", float(ratio), "", "", ""])
    if times:
        speed_factor = times["lbf"] / times["idf"]
        rows.append(["idf_speed_factor_vs_lbf", "", "", "", float(speed_factor), ""])
        print(f"idf: {1.0 / times['idf']:.1f} images/s, lbf: {1.0 / times['lbf']:.1f} images/s "
              f"(idf is {speed_factor:.2f}x; ~2x is typical at equal settings)")
    print(f"weight-parameter ratio lbf:idf = {ratio:g}")
    if args.report:
        reports.write_csv(args.report, header, rows)
    return 0


def cmd_sweep_k(args) -> int:
    seed = _default_seed(args)
    k_values = [int(v) for v in args.k_values.split(",")]
    for k in k_values:
        if k < 2:
            raise ValueError(f"magnitude k must be >= 2, got {k}")
    if args.synth is None:
        raise ValueError("sweep-k runs on synthetic data; pass --synth [SPEC]")
    train_samples = generate_synthetic(_parse_synth_spec(args.synth, seed))
    test_config = _parse_synth_spec(args.synth, seed)
    test_config = replace(test_config, count=max(10, test_config.count // 4), seed=test_config.seed + 1)
    test_samples = generate_synthetic(test_config)
    norm = NormalizationKind(args.norm)
    rows = []
    for k in k_values:
        config = _cascade_config(args, seed)
        config.idf_k = k
        model, errors = _train_model(train_samples, config, args, norm)
        stage_errors, _ = _evaluate(model, test_samples, norm)
        rows.append([k, seed, float(stage_errors[0]), errors[-1], float(stage_errors[-1])])
        print(f"k={k}: final_test_error={stage_errors[-1]:.6f}")
    if args.report:
        reports.write_csv(
            args.report,
            ["k", "seed", "stage0_test_error", "final_train_error", "final_test_error"],
            rows,
        )
    return 0


def cmd_synth(args) -> int:
    seed = _default_seed(args)
    config = _parse_synth_spec(args.spec or "", seed)
    samples = generate_synthetic(config)
    export_dataset(samples, args.out, image_format=args.format)
    print(f"wrote {len(samples)} samples -> {args.out}")
    return 0


def cmd_inspect(args) -> int:
    model = load_model(args.model)
    config = model.config
    dims = cascade.report_dimensions(config, model.init_shapes.shape[0])
    actual = os.path.getsize(args.model)
    pairs = [
        ("encoding", config.encoding.value),
        ("stages", config.stages),
        ("landmarks", config.landmarks),
        ("trees_per_forest", config.trees_per_forest),
        ("depth", config.depth),
        ("idf_k", config.idf_k),
        ("candidates_per_landmark", config.candidates_per_landmark),
        ("ridge_lambda", config.ridge_lambda),
        ("seed", config.seed),
        ("init_shapes", model.init_shapes.shape[0]),
        ("feature_dim", dims.feature_dim),
        ("linear_weight_params", dims.linear_weight_parameters),
        ("parameter_count", dims.parameter_count),
        ("estimated_model_bytes", dims.estimated_model_bytes),
        ("actual_model_bytes", actual),
    ]
    for key, value in pairs:
        print(f"{key}: {value}")
    if args.report:
        reports.write_csv(args.report, ["key", "value"], [[k, v] for k, v in pairs])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="idfalign", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a cascade model")
    _add_data_flags(p_train)
    _add_cascade_flags(p_train)
    p_train.add_argument("--seed", type=int, default=None)
    p_train.add_argument("--norm", choices=[n.value for n in NormalizationKind], default="boxdiag")
    p_train.add_argument("-o", "--output", required=True)
    p_train.add_argument("--report", default=None)
    p_train.set_defaults(func=cmd_train)

    p_fit = sub.add_parser("fit", help="fit landmarks in one image")
    p_fit.add_argument("model")
    p_fit.add_argument("image")
    p_fit.add_argument("--box", default=None, help="x,y,w,h")
    p_fit.add_argument("--pts", default=None, help="derive the box from this .pts file")
    p_fit.add_argument("--multi-init", action="store_true")
    p_fit.add_argument("--stages", type=int, default=None, help="truncate the cascade to N stages")
    p_fit.add_argument("-o", "--output", required=True)
    p_fit.add_argument("--overlay", default=None)
    p_fit.set_defaults(func=cmd_fit)

    p_eval = sub.add_parser("eval", help="evaluate a model against ground truth")
    p_eval.add_argument("model")
    _add_data_flags(p_eval)
    p_eval.add_argument("--seed", type=int, default=None)
    p_eval.add_argument("--norm", choices=[n.value for n in NormalizationKind], default="interocular")
    p_eval.add_argument("--report", default=None)
    p_eval.add_argument("--per-landmark", default=None)
    p_eval.set_defaults(func=cmd_eval)

    p_bench = sub.add_parser("bench", help="compare idf and lbf models")
    p_bench.add_argument("--idf", required=True)
    p_bench.add_argument("--lbf", required=True)
    _add_data_flags(p_bench)
    p_bench.add_argument("--seed", type=int, default=None)
    p_bench.add_argument("--repetitions", type=int, default=3)
    p_bench.add_argument("--parallel", type=int, default=1)
    p_bench.add_argument("--report", default=None)
    p_bench.set_defaults(func=cmd_bench)

    p_sweep = sub.add_parser("sweep-k", help="train one cascade per magnitude value")
    _add_data_flags(p_sweep)
    _add_cascade_flags(p_sweep)
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--norm", choices=[n.value for n in NormalizationKind], default="boxdiag")
    p_sweep.add_argument("--k-values", dest="k_values", default="10,20,30", metavar="K1,K2,...")
    p_sweep.add_argument("--report", default=None)
    p_sweep.set_defaults(func=cmd_sweep_k)

    p_synth = sub.add_parser("synth", help="write a synthetic dataset to disk")
    p_synth.add_argument("--spec", default="", help="e.g. n=200,seed=7")
    p_synth.add_argument("--seed", type=int, default=None)
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--format", choices=["pgm", "png"], default="pgm")
    p_synth.set_defaults(func=cmd_synth)

    p_inspect = sub.add_parser("inspect", help="print model dimensions and size")
    p_inspect.add_argument("model")
    p_inspect.add_argument("--report", default=None)
    p_inspect.set_defaults(func=cmd_inspect)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # CLI boundary: report and signal failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
