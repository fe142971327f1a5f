"""CLI pipeline: exit codes, file artifacts, and command chaining."""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pytest

from rangeforge import ProjectionConfig, read_velodyne_bin, tensor_from_bytes
from rangeforge.cli import main, parse_box, tensor_to_image, tensor_to_mask
from rangeforge.diffusion import TrainConfig
from rangeforge import records, tensorfile

GRID_FLAGS = ["--height", "16", "--width", "128", "--r-max", "60.0"]


def run(argv) -> int:
    return main([str(a) for a in argv])


@pytest.fixture()
def scene(tmp_path) -> dict:
    out = tmp_path / "scenes"
    assert run(["synth", "--seed", 6, "--out-dir", out, "--cars", 1,
                "--name", "demo", *GRID_FLAGS]) == 0
    return {
        "dir": out,
        "scan": out / "demo.bin",
        "labels": out / "demo.labels.bin",
        "boxes": out / "demo.boxes.txt",
    }


def test_parse_box_formats():
    b = parse_box("10,0,-0.9,4.5,1.9,1.6,0.3")
    assert b.cx == 10.0 and b.yaw == 0.3
    with pytest.raises(ValueError):
        parse_box("1,2,3")


def test_unknown_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        run(["project", "--does-not-exist", "x"])
    assert exc.value.code == 2


def test_unknown_command_exits_2():
    with pytest.raises(SystemExit) as exc:
        run(["frobnicate"])
    assert exc.value.code == 2


def test_missing_file_exits_1(tmp_path, capsys):
    code = run(["project", "--scan", tmp_path / "nope.bin", "--out", tmp_path / "o.rvt"])
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_synth_writes_scene_files(scene):
    assert scene["scan"].is_file()
    assert scene["labels"].is_file()
    assert scene["boxes"].is_file()
    cloud = read_velodyne_bin(scene["scan"])
    assert len(cloud) > 0
    assert scene["labels"].stat().st_size == 4 * len(cloud)


def test_project_invert_round_trip(scene, tmp_path):
    img_path = tmp_path / "img.rvt"
    assert run(["project", "--scan", scene["scan"], "--out", img_path, *GRID_FLAGS]) == 0
    img = tensor_to_image(tensor_from_bytes(img_path.read_bytes()))
    assert img.shape == (16, 128)

    cloud_path = tmp_path / "back.bin"
    assert run(["invert", "--image", img_path, "--out", cloud_path, "--r-max", "60.0"]) == 0
    back = read_velodyne_bin(cloud_path)
    assert len(back) == int(img.returns_mask().sum())

    # round-trip bound: every reconstructed point within r * cell diagonal
    cfg = ProjectionConfig(height=16, width=128, r_max=60.0)
    orig = read_velodyne_bin(scene["scan"])
    from rangeforge import project

    res = project(orig, cfg)
    win = res.winner_index[res.winner_index >= 0]
    # match winners to reconstructed points (both row-major over pixels)
    rr, cc = np.nonzero(res.image.returns_mask())
    owner = res.winner_index[rr, cc]
    err = np.linalg.norm(orig.xyz[owner] - back.xyz, axis=1)
    r = np.linalg.norm(orig.xyz[owner], axis=1)
    assert np.mean(err <= r * cfg.quantization_bound()) >= 0.99


def test_mask_from_box_cli(scene, tmp_path):
    mask_path = tmp_path / "m.rvt"
    assert run(["mask", "--box", "12,0,-0.9,4.5,1.9,1.6,0", "--out", mask_path, *GRID_FLAGS]) == 0
    mask = tensor_to_mask(tensor_from_bytes(mask_path.read_bytes()))
    assert mask.count() > 0


def test_mask_from_labels_cli(scene, tmp_path):
    mask_path = tmp_path / "m.rvt"
    assert run(["mask", "--scan", scene["scan"], "--labels", scene["labels"],
                "--out", mask_path, *GRID_FLAGS]) == 0
    mask = tensor_to_mask(tensor_from_bytes(mask_path.read_bytes()))
    assert mask.count() > 0
    raw_path = tmp_path / "raw.rvt"
    assert run(["mask", "--scan", scene["scan"], "--labels", scene["labels"],
                "--no-hull", "--out", raw_path, *GRID_FLAGS]) == 0
    raw = tensor_to_mask(tensor_from_bytes(raw_path.read_bytes()))
    assert raw.count() <= mask.count()
    assert np.all(mask.bits[raw.bits])


def test_mask_requires_inputs(tmp_path, capsys):
    assert run(["mask", "--out", tmp_path / "m.rvt"]) == 1


@pytest.fixture(scope="module")
def trained(tmp_path_factory) -> dict:
    """Tiny dataset + short training shared by pipeline tests."""
    root = tmp_path_factory.mktemp("trained")
    data = root / "data"
    assert run(["make-dataset", "--scenes", 6, "--out-dir", data, "--seed", 100,
                *GRID_FLAGS]) == 0
    cfg = TrainConfig(T=20, beta_1=1e-3, beta_T=0.2, lr=0.1, steps=60, batch=2,
                      seed=0, crop_h=16, crop_w=128)
    cfg_path = root / "train.cfg"
    records.write_record(cfg_path, cfg.to_record())
    ckpt = root / "ckpt"
    assert run(["train", "--dataset", data, "--config", cfg_path, "--out-dir", ckpt]) == 0
    return {"root": root, "data": data, "ckpt": ckpt}


def test_make_dataset_manifest(trained):
    manifest = records.read_record(trained["data"] / "manifest.txt")
    n = int(manifest["count"])
    assert n == 6
    for i in range(n):
        stem = manifest[f"example.{i}"]
        for suffix in (".x.rvt", ".mask.rvt", ".xm.rvt"):
            assert (trained["data"] / f"{stem}{suffix}").is_file()


def test_train_writes_checkpoint_and_losses(trained):
    assert (trained["ckpt"] / "manifest.txt").is_file()
    losses = [float(v) for v in (trained["ckpt"] / "losses.txt").read_text().split()]
    assert len(losses) == 60
    assert all(math.isfinite(v) for v in losses)


def test_generate_single_box(trained, scene, tmp_path):
    out = tmp_path / "gen"
    assert run(["generate", "--checkpoint", trained["ckpt"], "--scan", scene["scan"],
                "--box", "12,0,-0.9,4.5,1.9,1.6,0", "--seed", 9,
                "--out-dir", out, *GRID_FLAGS]) == 0
    assert (out / "edited.rvt").is_file()
    assert (out / "edited.bin").is_file()
    assert (out / "mask_0.rvt").is_file()
    meta = records.read_record(out / "edits.txt")
    assert meta["seed"] == "9" and meta["edits"] == "1"


def test_generate_requires_box_and_input(trained, scene, tmp_path, capsys):
    assert run(["generate", "--checkpoint", trained["ckpt"], "--scan", scene["scan"],
                "--seed", "1", "--out-dir", tmp_path / "x", *GRID_FLAGS]) == 1
    assert run(["generate", "--checkpoint", trained["ckpt"],
                "--box", "12,0,-0.9,4.5,1.9,1.6,0",
                "--seed", "1", "--out-dir", tmp_path / "y", *GRID_FLAGS]) == 1


def test_two_box_job_equals_manual_chaining(trained, scene, tmp_path):
    """One 2-box command == two chained 1-box commands with seeds s, s+1."""
    box1 = "12,0,-0.9,4.5,1.9,1.6,0"
    box2 = "9,4,-0.9,4.2,1.8,1.5,0.6"
    seed = 31

    both = tmp_path / "both"
    assert run(["generate", "--checkpoint", trained["ckpt"], "--scan", scene["scan"],
                "--box", box1, "--box", box2, "--seed", seed,
                "--out-dir", both, *GRID_FLAGS]) == 0

    img0 = tmp_path / "base.rvt"
    assert run(["project", "--scan", scene["scan"], "--out", img0, *GRID_FLAGS]) == 0
    step1 = tmp_path / "s1"
    assert run(["generate", "--checkpoint", trained["ckpt"], "--image", img0,
                "--box", box1, "--seed", seed, "--out-dir", step1, *GRID_FLAGS]) == 0
    step2 = tmp_path / "s2"
    assert run(["generate", "--checkpoint", trained["ckpt"], "--image", step1 / "edited.rvt",
                "--box", box2, "--seed", seed + 1, "--out-dir", step2, *GRID_FLAGS]) == 0

    assert (both / "edited.rvt").read_bytes() == (step2 / "edited.rvt").read_bytes()
    assert (both / "edited.bin").read_bytes() == (step2 / "edited.bin").read_bytes()


def test_generate_deterministic_same_seed(trained, scene, tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert run(["generate", "--checkpoint", trained["ckpt"], "--scan", scene["scan"],
                    "--box", "12,0,-0.9,4.5,1.9,1.6,0", "--seed", 5,
                    "--out-dir", out, *GRID_FLAGS]) == 0
        outs.append((out / "edited.rvt").read_bytes())
    assert outs[0] == outs[1]


def test_edit_locality_via_cli(trained, scene, tmp_path):
    out = tmp_path / "gen"
    assert run(["generate", "--checkpoint", trained["ckpt"], "--scan", scene["scan"],
                "--box", "12,0,-0.9,4.5,1.9,1.6,0", "--seed", 9,
                "--out-dir", out, *GRID_FLAGS]) == 0
    img0 = tmp_path / "base.rvt"
    assert run(["project", "--scan", scene["scan"], "--out", img0, *GRID_FLAGS]) == 0
    base = tensor_from_bytes(img0.read_bytes())
    edited = tensor_from_bytes((out / "edited.rvt").read_bytes())
    mask = tensor_to_mask(tensor_from_bytes((out / "mask_union.rvt").read_bytes()))
    changed = np.any(base != edited, axis=2)
    assert np.all(mask.bits[changed])


def test_evaluate_identical_inputs_all_zero(trained, scene, tmp_path, capsys):
    img0 = tmp_path / "base.rvt"
    assert run(["project", "--scan", scene["scan"], "--out", img0, *GRID_FLAGS]) == 0
    report_path = tmp_path / "report.txt"
    assert run(["evaluate", "--generated", img0, "--reference", img0,
                "--out", report_path, "--r-max", "60.0"]) == 0
    report = records.read_record(report_path)
    assert float(report["jsd"]) == 0.0
    assert float(report["mmd"]) == 0.0
    assert float(report["cd"]) == 0.0
    assert float(report["mae"]) == 0.0
    line = capsys.readouterr().out.strip().splitlines()[-1]
    assert "jsd=" in line and "mae=" in line


def test_evaluate_with_mask(trained, scene, tmp_path):
    img0 = tmp_path / "base.rvt"
    assert run(["project", "--scan", scene["scan"], "--out", img0, *GRID_FLAGS]) == 0
    mask_path = tmp_path / "m.rvt"
    assert run(["mask", "--box", "12,0,-0.9,4.5,1.9,1.6,0", "--out", mask_path,
                *GRID_FLAGS]) == 0
    assert run(["evaluate", "--generated", img0, "--reference", img0,
                "--mask", mask_path, "--r-max", "60.0"]) == 0
