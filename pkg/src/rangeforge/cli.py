"""Command-line pipeline driver.

Subcommands: synth, project, invert, mask, make-dataset, train, generate,
evaluate, serve. Tensors travel between stages as TensorFiles; records and
configs are flat key=value text. Runtime failures exit 1 with a single-line
diagnostic on stderr; usage errors exit 2.
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import records, tensorfile
from .dataset import (
    CAR_CLASS_ID,
    SceneSpec,
    build_training_example,
    read_labels,
    read_velodyne_bin,
    synthetic_scene,
    write_boxes,
    write_labels,
    write_velodyne_bin,
)
from .diffusion import (
    TrainConfig,
    load_checkpoint,
    make_schedule,
    make_train_example,
    save_checkpoint,
    schedule_from_manifest,
    train,
)
from .denoiser import Denoiser
from .editing import edit_scene_image, union_mask
from .masking import hull_mask, mask_from_labeled_points
from .metrics import evaluate_masked_region
from .projection import ProjectionConfig, invert, project
from .types import OrientedBox, RangeImage, SemanticMask


def image_to_tensor(img: RangeImage) -> np.ndarray:
    return img.as_grid()


def tensor_to_image(grid: np.ndarray) -> RangeImage:
    if grid.ndim != 3 or grid.shape[2] != 2:
        raise ValueError(f"expected an H x W x 2 tensor, got {grid.shape}")
    return RangeImage.from_grid(grid)


def mask_to_tensor(mask: SemanticMask) -> np.ndarray:
    return mask.bits.astype(np.float32)[:, :, None]


def tensor_to_mask(grid: np.ndarray) -> SemanticMask:
    if grid.ndim != 3 or grid.shape[2] != 1:
        raise ValueError(f"expected an H x W x 1 tensor, got {grid.shape}")
    return SemanticMask(grid[:, :, 0] != 0.0)


def parse_box(text: str) -> OrientedBox:
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != 7:
        raise ValueError(f"box needs 7 numbers cx,cy,cz,l,w,h,yaw; got {text!r}")
    cx, cy, cz, l, w, h, yaw = (float(v) for v in parts)
    return OrientedBox(cx, cy, cz, l, w, h, yaw)


def _add_grid_flags(p: argparse.ArgumentParser, dims: bool = True) -> None:
    if dims:
        p.add_argument("--height", type=int, default=64)
        p.add_argument("--width", type=int, default=1024)
    p.add_argument("--phi-min-deg", type=float, default=-24.8)
    p.add_argument("--phi-max-deg", type=float, default=2.0)
    p.add_argument("--r-max", type=float, default=80.0)


def _grid_from_args(args, height: int | None = None, width: int | None = None) -> ProjectionConfig:
    return ProjectionConfig(
        height=height if height is not None else args.height,
        width=width if width is not None else args.width,
        phi_min=math.radians(args.phi_min_deg),
        phi_max=math.radians(args.phi_max_deg),
        r_max=args.r_max,
    )


def _scene_paths(directory: Path, stem: str) -> dict[str, Path]:
    return {
        "scan": directory / f"{stem}.bin",
        "labels": directory / f"{stem}.labels.bin",
        "boxes": directory / f"{stem}.boxes.txt",
    }


# --- subcommand implementations ----------------------------------------------

def cmd_synth(args) -> int:
    cfg = _grid_from_args(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = SceneSpec(seed=args.seed, grid=cfg, car_count=args.cars, sigma=args.sigma)
    scan = synthetic_scene(spec)
    stem = args.name or f"scene-{args.seed:04d}"
    paths = _scene_paths(out, stem)
    write_velodyne_bin(paths["scan"], scan.cloud)
    write_labels(paths["labels"], scan.labels)
    write_boxes(paths["boxes"], scan.boxes)
    print(records.logfmt({"scene": stem, "points": len(scan.cloud), "cars": len(scan.boxes)}))
    return 0


def cmd_project(args) -> int:
    cfg = _grid_from_args(args)
    cloud = read_velodyne_bin(args.scan)
    res = project(cloud, cfg)
    tensorfile.write_tensor(args.out, image_to_tensor(res.image))
    print(records.logfmt({
        "points": len(cloud),
        "returns": int(res.image.returns_mask().sum()),
        "out": args.out,
    }))
    return 0


def cmd_invert(args) -> int:
    grid = tensorfile.read_tensor(args.image)
    img = tensor_to_image(grid)
    cfg = _grid_from_args(args, height=img.height, width=img.width)
    cloud = invert(img, cfg)
    write_velodyne_bin(args.out, cloud)
    print(records.logfmt({"points": len(cloud), "out": args.out}))
    return 0


def cmd_mask(args) -> int:
    if args.box:
        cfg = _grid_from_args(args)
        from .editing import box_edit_mask

        masks = [box_edit_mask(parse_box(b), cfg) for b in args.box]
        mask = masks[0]
        for m in masks[1:]:
            mask = mask.union(m)
    elif args.scan and args.labels:
        cfg = _grid_from_args(args)
        cloud = read_velodyne_bin(args.scan)
        labels = read_labels(args.labels, len(cloud))
        res = project(cloud, cfg)
        raw = mask_from_labeled_points(labels, args.class_id, res)
        mask = raw if args.no_hull else hull_mask(raw.pixels(), cfg.height, cfg.width)
    else:
        raise ValueError("need either --box or both --scan and --labels")
    tensorfile.write_tensor(args.out, mask_to_tensor(mask))
    print(records.logfmt({"pixels": mask.count(), "out": args.out}))
    return 0


def cmd_make_dataset(args) -> int:
    cfg = _grid_from_args(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest: dict = {
        "format": "rangeforge-dataset-1",
        "height": cfg.height,
        "width": cfg.width,
        "phi_min_deg": args.phi_min_deg,
        "phi_max_deg": args.phi_max_deg,
        "r_max": cfg.r_max,
        "use_hull": int(not args.no_hull),
    }
    count = 0
    seed = args.seed
    attempts = 0
    while count < args.scenes and attempts < args.scenes * 20:
        spec = SceneSpec(seed=seed, grid=cfg, car_count=args.cars, sigma=args.sigma)
        seed += 1
        attempts += 1
        scan = synthetic_scene(spec)
        ex = build_training_example(scan, cfg, use_hull=not args.no_hull)
        if ex is None:
            continue
        stem = f"{count:05d}"
        img = project(scan.cloud, cfg).image
        tensorfile.write_tensor(out / f"{stem}.x.rvt", image_to_tensor(img))
        tensorfile.write_tensor(out / f"{stem}.mask.rvt", mask_to_tensor(ex.mask))
        from .masking import apply_mask

        tensorfile.write_tensor(
            out / f"{stem}.xm.rvt", image_to_tensor(apply_mask(img, ex.mask))
        )
        manifest[f"example.{count}"] = stem
        count += 1
    manifest["count"] = count
    records.write_record(out / "manifest.txt", manifest)
    print(records.logfmt({"examples": count, "out": str(out)}))
    return 0


def load_dataset(directory: str | Path):
    """Read a make-dataset directory back into TrainExamples plus its grid."""
    directory = Path(directory)
    manifest = records.read_record(directory / "manifest.txt")
    if manifest.get("format") != "rangeforge-dataset-1":
        raise ValueError(f"not a dataset directory: {directory}")
    cfg = ProjectionConfig(
        height=int(manifest["height"]),
        width=int(manifest["width"]),
        phi_min=math.radians(float(manifest["phi_min_deg"])),
        phi_max=math.radians(float(manifest["phi_max_deg"])),
        r_max=float(manifest["r_max"]),
    )
    examples = []
    for i in range(int(manifest["count"])):
        stem = manifest[f"example.{i}"]
        img = tensor_to_image(tensorfile.read_tensor(directory / f"{stem}.x.rvt"))
        mask = tensor_to_mask(tensorfile.read_tensor(directory / f"{stem}.mask.rvt"))
        examples.append(make_train_example(img, mask, cfg))
    return examples, cfg


def cmd_train(args) -> int:
    cfg_fields = records.read_record(args.config)
    tcfg = TrainConfig.from_record(cfg_fields)
    examples, grid = load_dataset(args.dataset)
    if not examples:
        raise ValueError("dataset is empty")
    sched = make_schedule(T=tcfg.T, beta_1=tcfg.beta_1, beta_T=tcfg.beta_T)
    model = Denoiser(seed=tcfg.seed)
    losses = train(model, examples, sched, tcfg)
    out = Path(args.out_dir)
    save_checkpoint(
        model, out, sched_params={"T": tcfg.T, "beta_1": tcfg.beta_1, "beta_T": tcfg.beta_T}
    )
    records.write_record(out / "train_config.txt", tcfg.to_record())
    (out / "losses.txt").write_text("".join(f"{v!r}\n" for v in losses))
    k = min(100, max(1, len(losses) // 2))
    print(records.logfmt({
        "steps": len(losses),
        "first_mean": float(np.mean(losses[:k])),
        "last_mean": float(np.mean(losses[-k:])),
        "checkpoint": str(out),
    }))
    return 0


def _load_base_image(args, cfg_hint=None):
    if args.image:
        img = tensor_to_image(tensorfile.read_tensor(args.image))
        cfg = _grid_from_args(args, height=img.height, width=img.width)
        return img, cfg
    cfg = _grid_from_args(args)
    cloud = read_velodyne_bin(args.scan)
    return project(cloud, cfg).image, cfg


def cmd_generate(args) -> int:
    if bool(args.image) == bool(args.scan):
        raise ValueError("need exactly one of --image or --scan")
    model, sched_fields = load_checkpoint(args.checkpoint)
    sched = schedule_from_manifest(sched_fields)
    img, cfg = _load_base_image(args)
    boxes = [parse_box(b) for b in args.box]
    if not boxes:
        raise ValueError("need at least one --box")
    edited, masks = edit_scene_image(img, boxes, args.seed, model, sched, cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tensorfile.write_tensor(out / "edited.rvt", image_to_tensor(edited))
    write_velodyne_bin(out / "edited.bin", invert(edited, cfg))
    for i, m in enumerate(masks):
        tensorfile.write_tensor(out / f"mask_{i}.rvt", mask_to_tensor(m))
    tensorfile.write_tensor(out / "mask_union.rvt", mask_to_tensor(union_mask(masks)))
    meta: dict = {"seed": args.seed, "edits": len(boxes)}
    for i, b in enumerate(args.box):
        meta[f"box.{i}"] = b
    records.write_record(out / "edits.txt", meta)
    print(records.logfmt({"edits": len(boxes), "out": str(out)}))
    return 0


def cmd_evaluate(args) -> int:
    gen = tensor_to_image(tensorfile.read_tensor(args.generated))
    ref = tensor_to_image(tensorfile.read_tensor(args.reference))
    cfg = _grid_from_args(args, height=gen.height, width=gen.width)
    if args.mask:
        mask = tensor_to_mask(tensorfile.read_tensor(args.mask))
    else:
        mask = SemanticMask(np.ones(gen.shape, dtype=bool))
    report = evaluate_masked_region(gen, ref, mask, cfg)
    line = records.logfmt(report.to_record())
    print(line)
    if args.out:
        records.write_record(args.out, report.to_record())
    return 0


def cmd_serve(args) -> int:
    from .service import serve

    serve(
        port=args.port,
        checkpoint=args.checkpoint,
        scene_dir=args.scene_dir,
        cfg=_grid_from_args(args),
        host=args.host,
        queue_depth=args.queue_depth,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rangeforge",
        description="LiDAR range-view editing pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled scene")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--cars", type=int, default=1)
    p.add_argument("--sigma", type=float, default=0.02)
    p.add_argument("--name", default=None)
    _add_grid_flags(p)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("project", help="scan .bin -> range image tensor")
    p.add_argument("--scan", required=True)
    p.add_argument("--out", required=True)
    _add_grid_flags(p)
    p.set_defaults(fn=cmd_project)

    p = sub.add_parser("invert", help="range image tensor -> cloud .bin")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    _add_grid_flags(p, dims=False)
    p.set_defaults(fn=cmd_invert)

    p = sub.add_parser("mask", help="build a semantic mask tensor")
    p.add_argument("--box", action="append", default=[], metavar="CX,CY,CZ,L,W,H,YAW")
    p.add_argument("--scan")
    p.add_argument("--labels")
    p.add_argument("--class-id", type=int, default=CAR_CLASS_ID)
    p.add_argument("--no-hull", action="store_true")
    p.add_argument("--out", required=True)
    _add_grid_flags(p)
    p.set_defaults(fn=cmd_mask)

    p = sub.add_parser("make-dataset", help="synthetic training triples")
    p.add_argument("--scenes", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cars", type=int, default=1)
    p.add_argument("--sigma", type=float, default=0.02)
    p.add_argument("--no-hull", action="store_true")
    _add_grid_flags(p)
    p.set_defaults(fn=cmd_make_dataset)

    p = sub.add_parser("train", help="train the denoiser on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("generate", help="apply sequential box edits")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scan")
    p.add_argument("--image")
    p.add_argument("--box", action="append", default=[], metavar="CX,CY,CZ,L,W,H,YAW")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    _add_grid_flags(p)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("evaluate", help="instance-restricted metrics")
    p.add_argument("--generated", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--mask")
    p.add_argument("--out")
    _add_grid_flags(p, dims=False)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("serve", help="run the scenario-editing service")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scene-dir", default=None)
    p.add_argument("--queue-depth", type=int, default=0, help="0 = unbounded")
    _add_grid_flags(p)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except KeyboardInterrupt:
        return 130
    except Exception as exc:  # single-line diagnostic, exit 1
        print(f"rangeforge: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
