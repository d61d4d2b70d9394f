"""Command-line pipeline: synth, fit-reconstructor, reconstruct,
patch-experiment, train, evaluate, segment.

Exit codes: 0 success, 2 usage error, 3 config validation failure,
4 file-format error.  Every subcommand writes only under --out, and all
randomness flows from --seed, so re-runs are byte-identical.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import report
from .config import PipelineConfig, default_config, load_config
from .errors import (
    ConfigError,
    FormatError,
    ParseError,
    ToolkitError,
    ValidationError,
)
from .formats import (
    load_camera,
    load_reconstructor,
    load_table,
    quantize_u8,
    read_pgm,
    read_ppm,
    read_spc1,
    save_camera,
    save_reconstructor,
    srgb_decode,
    u8_to_unit,
    write_pgm,
    write_ppm,
    write_spc1,
)
from .net.unet import UNetConfig, unet_init
from .patches import extract_patches, fit_baselines, pca_fit, pca_project, separability_report, PatchDataset
from .spectral import N_BANDS, SpectralCube, fit_wiener, gaussian_camera, reconstruct_cube, render_cube
from .synth import (
    DegradationConfig,
    LabeledScene,
    SceneConfig,
    default_tissue_library,
    generate_dataset,
    make_rng,
    water_attenuation_profile,
)
from .training import (
    TrainConfig,
    checkpoint_load,
    checkpoint_save,
    compute_class_weights,
    evaluate_scenes,
    iou,
    predict_mask,
    split_dataset,
    train,
)

_STREAM_SPECTRA_SAMPLE = 20
_STREAM_PATCH_SAMPLE = 21


class UsageError(ToolkitError):
    pass


def _scene_config(config: PipelineConfig, seed: int) -> SceneConfig:
    return SceneConfig(
        height=config["scene.height"],
        width=config["scene.width"],
        classes=default_tissue_library(config["scene.classes"], jitter=config["scene.jitter"]),
        n_regions=config["scene.regions"],
        shading_strength=config["scene.shading"],
        seed=seed,
        dominant_share=config["scene.dominant_share"],
    )


def _degradation_config(config: PipelineConfig) -> DegradationConfig:
    if config["degrade.attenuation_file"]:
        _, values = load_table(config["degrade.attenuation_file"])
        alpha = values[:, 0]
    else:
        alpha = config["degrade.attenuation_scale"] * water_attenuation_profile()
    return DegradationConfig(
        blur_sigma_px=config["degrade.blur_sigma"],
        noise_sigma=config["degrade.noise_sigma"],
        attenuation_alpha=alpha,
        attenuation_depth=config["degrade.attenuation_depth"],
    )


def _camera(config: PipelineConfig):
    if config["reconstruction.camera"]:
        return load_camera(config["reconstruction.camera"])
    return gaussian_camera()


def _train_config(config: PipelineConfig, seed: int) -> TrainConfig:
    return TrainConfig(
        epochs=config["training.epochs"],
        batch_size=config["training.batch_size"],
        optimizer=config["training.optimizer"],
        lr=config["training.lr"],
        augment=config["training.augment"],
        val_fraction=config["training.val_fraction"],
        seed=seed,
    )


def _write_manifest(path: Path, seed: int, class_names: list[str], scenes: list[LabeledScene]) -> None:
    lines = ["# dataset manifest"]
    lines.append(f"seed = {seed}")
    lines.append(f"classes = {','.join(class_names)}")
    lines.append(f"count = {len(scenes)}")
    for i, scene in enumerate(scenes):
        lines.append(f"scene_{i:03d} = {scene.fingerprint:016x}")
    path.write_text("\n".join(lines) + "\n")


def _read_manifest(dataset_dir: Path) -> dict:
    path = dataset_dir / "manifest.txt"
    if not path.is_file():
        raise FormatError(f"{path}: missing dataset manifest")
    info = {"scenes": []}
    for line in path.read_text().splitlines():
        body = line.split("#", 1)[0].strip()
        if not body or "=" not in body:
            continue
        key, _, value = body.partition("=")
        key, value = key.strip(), value.strip()
        if key == "seed":
            info["seed"] = int(value)
        elif key == "classes":
            info["classes"] = value.split(",")
        elif key == "count":
            info["count"] = int(value)
        elif key.startswith("scene_"):
            info["scenes"].append((key, value))
    if "classes" not in info or "count" not in info:
        raise FormatError(f"{path}: manifest lacks classes/count")
    return info


def _load_dataset(dataset_dir) -> tuple[list[LabeledScene], list[str]]:
    d = Path(dataset_dir)
    info = _read_manifest(d)
    scenes = []
    for i in range(info["count"]):
        stem = f"scene_{i:03d}"
        cube = read_spc1(d / f"{stem}.spc")
        labels = read_pgm(d / f"{stem}_labels.pgm").astype(np.int64)
        fp = int(info["scenes"][i][1], 16) if i < len(info["scenes"]) else 0
        scenes.append(LabeledScene(cube=cube, labels=labels, fingerprint=fp))
    return scenes, info["classes"]


def cmd_synth(args, config: PipelineConfig) -> int:
    out = report.ensure_out_dir(args.out)
    scene_cfg = _scene_config(config, args.seed)
    deg = _degradation_config(config)
    camera = _camera(config)
    scenes = generate_dataset(scene_cfg, deg, config["scene.count"], args.seed)
    for i, scene in enumerate(scenes):
        stem = f"scene_{i:03d}"
        write_spc1(out / f"{stem}.spc", scene.cube)
        write_pgm(out / f"{stem}_labels.pgm", scene.labels.astype(np.uint8))
        rgb = render_cube(scene.cube, camera, exposure=config["reconstruction.exposure"])
        write_ppm(out / f"{stem}_rgb.ppm", quantize_u8(rgb))
    _write_manifest(out / "manifest.txt", args.seed, [c.name for c in scene_cfg.classes], scenes)
    print(f"wrote {len(scenes)} scenes to {out}")
    return 0


def cmd_fit_reconstructor(args, config: PipelineConfig) -> int:
    out = report.ensure_out_dir(args.out)
    scenes, _ = _load_dataset(args.data)
    rng = make_rng(args.seed, _STREAM_SPECTRA_SAMPLE)
    all_pixels = np.concatenate([s.cube.data.reshape(N_BANDS, -1).T for s in scenes])
    n = min(config["reconstruction.training_samples"], all_pixels.shape[0])
    idx = rng.choice(all_pixels.shape[0], size=n, replace=False)
    camera = _camera(config)
    rec = fit_wiener(all_pixels[idx], camera, config["reconstruction.noise_sigma"])
    save_reconstructor(out / "reconstructor.json", rec)
    save_camera(out / "camera.txt", camera)
    print(f"fitted reconstructor from {n} spectra -> {out / 'reconstructor.json'}")
    return 0


def _reconstruct_image(path: Path, rec, config: PipelineConfig) -> SpectralCube:
    rgb = u8_to_unit(read_ppm(path))
    if config["reconstruction.gamma"] == "srgb":
        rgb = srgb_decode(rgb)
    return reconstruct_cube(rec, rgb)


def cmd_reconstruct(args, config: PipelineConfig) -> int:
    out = report.ensure_out_dir(args.out)
    rec = load_reconstructor(args.reconstructor)
    if args.data:
        d = Path(args.data)
        info = _read_manifest(d)
        for i in range(info["count"]):
            stem = f"scene_{i:03d}"
            ppm = d / f"{stem}_rgb.ppm"
            if ppm.is_file():
                cube = _reconstruct_image(ppm, rec, config)
                write_spc1(out / f"{stem}.spc", cube)
            else:
                (out / f"{stem}.spc").write_bytes((d / f"{stem}.spc").read_bytes())
            labels = d / f"{stem}_labels.pgm"
            if labels.is_file():
                (out / f"{stem}_labels.pgm").write_bytes(labels.read_bytes())
        (out / "manifest.txt").write_bytes((d / "manifest.txt").read_bytes())
        print(f"reconstructed {info['count']} scenes -> {out}")
        return 0
    if not args.inputs:
        raise UsageError("reconstruct needs --data or input files")
    for name in args.inputs:
        src = Path(name)
        if src.suffix == ".spc":
            (out / src.name).write_bytes(src.read_bytes())
        else:
            cube = _reconstruct_image(src, rec, config)
            write_spc1(out / (src.stem + ".spc"), cube)
    print(f"reconstructed {len(args.inputs)} files -> {out}")
    return 0


def cmd_patch_experiment(args, config: PipelineConfig) -> int:
    out = report.ensure_out_dir(args.out)
    scenes, _ = _load_dataset(args.data)
    size = config["patch.size"]
    stride = config["patch.stride"]
    parts = [extract_patches(s.cube, s.labels, size, stride) for s in scenes]
    vectors = np.concatenate([p.vectors for p in parts])
    labels = np.concatenate([p.labels for p in parts])
    rng = make_rng(args.seed, _STREAM_PATCH_SAMPLE)
    if vectors.shape[0] > config["patch.max_patches"]:
        keep = np.sort(rng.choice(vectors.shape[0], config["patch.max_patches"], replace=False))
        vectors, labels = vectors[keep], labels[keep]
    data = PatchDataset(patch_size=size, vectors=vectors, labels=labels)

    n_pca = min(config["patch.max_pca_samples"], vectors.shape[0])
    pca_idx = np.sort(rng.choice(vectors.shape[0], n_pca, replace=False))
    pca_data = PatchDataset(patch_size=size, vectors=vectors[pca_idx], labels=labels[pca_idx])
    model = pca_fit(pca_data, k=config["patch.k"])
    projected = pca_project(model, vectors)

    classifier = fit_baselines(data, split_seed=args.seed)
    separability = separability_report(projected, labels)

    report.projected_points_to_csv(projected, labels, out / "projected.csv")
    report.classifier_report_to_csv(classifier.accuracies, out / "classifiers.csv")
    report.separability_to_csv(separability, out / "separability.csv")
    for name in sorted(classifier.accuracies):
        print(f"{name}: held-out accuracy {classifier.accuracies[name]:.4f}")
    print(f"mean silhouette {separability.mean_silhouette:.4f}, "
          f"overlap fraction {separability.overlap_fraction:.4f}")
    return 0


def cmd_train(args, config: PipelineConfig) -> int:
    out = report.ensure_out_dir(args.out)
    scenes, class_names = _load_dataset(args.data)
    net_cfg = UNetConfig(
        in_channels=N_BANDS,
        n_classes=len(class_names),
        base_filters=config["training.base_filters"],
        dropout_rate=config["training.dropout"],
        dilation=config["training.dilation"],
        seed=args.seed,
    )
    model = unet_init(net_cfg)
    train_cfg = _train_config(config, args.seed)
    model, history = train(model, scenes, train_cfg)
    checkpoint_save(out / "checkpoint.unet", model)
    report.history_to_csv(history, out / "history.csv")
    report.save_history_figure(history, out / "history.png")
    print(f"final epoch: train loss {history.train_loss[-1]:.4f}, "
          f"val loss {history.val_loss[-1]:.4f}, val mean IoU {history.val_mean_iou[-1]:.4f}")
    return 0


def _evaluate_dataset(model, scenes, class_names, split, train_cfg):
    if split != "all":
        train_scenes, val_scenes = split_dataset(scenes, train_cfg)
        scenes = val_scenes if split == "val" else train_scenes
    weights = compute_class_weights([s.labels for s in scenes], model.config.n_classes)
    _, rep = evaluate_scenes(model, scenes, weights)
    return rep


def cmd_evaluate(args, config: PipelineConfig) -> int:
    out = report.ensure_out_dir(args.out)
    model = checkpoint_load(args.checkpoint)
    train_cfg = _train_config(config, args.seed)
    rows = []
    class_names = None
    for data_dir in args.data:
        scenes, names = _load_dataset(data_dir)
        class_names = class_names or names
        rep = _evaluate_dataset(model, scenes, names, args.split, train_cfg)
        rows.append((Path(data_dir).name, rep))
    report.iou_table_to_csv(rows, class_names, out / "iou.csv")
    report.save_iou_figure(rows, class_names, out / "iou.png")
    print(report.format_iou_table(rows, class_names))
    return 0


def cmd_segment(args, config: PipelineConfig) -> int:
    out = report.ensure_out_dir(args.out)
    model = checkpoint_load(args.checkpoint)
    src = Path(args.input)
    if src.suffix == ".spc":
        cube = read_spc1(src)
    else:
        if not args.reconstructor:
            raise UsageError("segment on an RGB image needs --reconstructor")
        rec = load_reconstructor(args.reconstructor)
        cube = _reconstruct_image(src, rec, config)
    mask = predict_mask(model, cube)
    write_pgm(out / "mask.pgm", mask.astype(np.uint8))
    write_ppm(out / "mask_color.ppm", report.colorize_mask(mask))
    if args.labels:
        gt = read_pgm(args.labels).astype(np.int64)
        rep = iou(mask, gt, model.config.n_classes)
        class_names = [f"class_{c}" for c in range(model.config.n_classes)]
        report.iou_table_to_csv([(src.stem, rep)], class_names, out / "iou.csv")
        print(report.format_iou_table([(src.stem, rep)], class_names))
    print(f"segmented {src} -> {out / 'mask.pgm'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", default=None, help="pipeline config file")
    shared.add_argument("--seed", type=int, default=0, help="master seed (all randomness)")
    shared.add_argument("--out", default=None, help="output directory")

    parser = argparse.ArgumentParser(
        prog="spectraseg",
        description="Spectral reflectance reconstruction and multispectral scene segmentation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("synth", parents=[shared], help="generate a labeled synthetic dataset")

    p = sub.add_parser("fit-reconstructor", parents=[shared], help="fit the RGB-to-spectrum map")
    p.add_argument("--data", required=True, help="dataset directory (synth output)")

    p = sub.add_parser("reconstruct", parents=[shared], help="turn RGB images into spectral cubes")
    p.add_argument("--reconstructor", required=True, help="reconstructor JSON file")
    p.add_argument("--data", default=None, help="dataset directory to reconstruct")
    p.add_argument("inputs", nargs="*", help="PPM images or SPC1 cubes")

    p = sub.add_parser("patch-experiment", parents=[shared], help="patch separability analysis")
    p.add_argument("--data", required=True, help="dataset directory")

    p = sub.add_parser("train", parents=[shared], help="train the segmentation network")
    p.add_argument("--data", required=True, help="dataset directory")

    p = sub.add_parser("evaluate", parents=[shared], help="IoU table for trained checkpoints")
    p.add_argument("--checkpoint", required=True, help="checkpoint file")
    p.add_argument("--data", nargs="+", required=True, help="dataset directories (table rows)")
    p.add_argument("--split", choices=["train", "val", "all"], default="val")

    p = sub.add_parser("segment", parents=[shared], help="segment one image or cube")
    p.add_argument("--checkpoint", required=True, help="checkpoint file")
    p.add_argument("--input", required=True, help="P6 PPM image or SPC1 cube")
    p.add_argument("--reconstructor", default=None, help="needed for PPM input")
    p.add_argument("--labels", default=None, help="ground-truth PGM for an IoU report")

    return parser


_COMMANDS = {
    "synth": cmd_synth,
    "fit-reconstructor": cmd_fit_reconstructor,
    "reconstruct": cmd_reconstruct,
    "patch-experiment": cmd_patch_experiment,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "segment": cmd_segment,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        config = load_config(args.config) if args.config else default_config()
        if args.out is None:
            args.out = config["paths.out"]
        return _COMMANDS[args.command](args, config)
    except (ParseError, ValidationError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return 4
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())
