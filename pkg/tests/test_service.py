"""HTTP service: endpoint contracts, status codes, job lifecycle,
determinism, and agreement with the CLI pipeline."""
from __future__ import annotations

import threading
import time
import urllib.error
import urllib.request

import numpy as np
import pytest

from rangeforge import ProjectionConfig, tensor_from_bytes
from rangeforge.cli import main as cli_main
from rangeforge.diffusion import TrainConfig
from rangeforge.records import dump_record, parse_record, write_record
from rangeforge.service import make_server

GRID = ProjectionConfig(height=16, width=128, r_max=60.0)
GRID_FLAGS = ["--height", "16", "--width", "128", "--r-max", "60.0"]


def run_cli(argv) -> int:
    return cli_main([str(a) for a in argv])


def request(method: str, url: str, body: dict | None = None):
    data = dump_record(body).encode() if body is not None else None
    req = urllib.request.Request(url, data=data, method=method)
    try:
        with urllib.request.urlopen(req) as resp:
            return resp.status, dict(resp.headers), resp.read()
    except urllib.error.HTTPError as err:
        return err.code, dict(err.headers), err.read()


@pytest.fixture(scope="module")
def server(tmp_path_factory):
    root = tmp_path_factory.mktemp("svc")
    scenes = root / "scenes"
    for seed, name in ((6, "alpha"), (7, "beta")):
        assert run_cli(["synth", "--seed", seed, "--out-dir", scenes, "--cars", 1,
                        "--name", name, *GRID_FLAGS]) == 0
    data = root / "data"
    assert run_cli(["make-dataset", "--scenes", 4, "--out-dir", data, "--seed", 50,
                    *GRID_FLAGS]) == 0
    cfg_path = root / "train.cfg"
    write_record(cfg_path, TrainConfig(T=15, lr=0.1, steps=40, batch=2, seed=0,
                                       crop_h=16, crop_w=128).to_record())
    ckpt = root / "ckpt"
    assert run_cli(["train", "--dataset", data, "--config", cfg_path,
                    "--out-dir", ckpt]) == 0

    httpd, service = make_server(0, ckpt, scenes, cfg=GRID)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{httpd.server_address[1]}"
    yield {"base": base, "scenes": scenes, "ckpt": ckpt, "service": service, "root": root}
    httpd.shutdown()
    service.stop()


def wait_done(base: str, job_id: str, timeout: float = 60.0) -> dict:
    deadline = time.time() + timeout
    while time.time() < deadline:
        status, _, body = request("GET", f"{base}/jobs/{job_id}")
        assert status == 200
        rec = parse_record(body.decode())
        if rec["status"] in ("done", "failed"):
            return rec
        time.sleep(0.05)
    raise TimeoutError(f"job {job_id} did not finish")


def test_scene_listing(server):
    status, _, body = request("GET", f"{server['base']}/scenes")
    assert status == 200
    rec = parse_record(body.decode())
    assert rec["count"] == "2"
    assert {rec["scene.0"], rec["scene.1"]} == {"alpha", "beta"}


def test_scene_bev_tensor(server):
    status, _, body = request("GET", f"{server['base']}/scenes/alpha/bev")
    assert status == 200
    grid = tensor_from_bytes(body)
    assert grid.shape == (320, 320, 1)
    assert grid.sum() > 0


def test_scene_unknown_404(server):
    status, _, _ = request("GET", f"{server['base']}/scenes/nope/bev")
    assert status == 404


def test_mask_preview_returns_tensor_and_count(server):
    status, headers, body = request(
        "POST", f"{server['base']}/mask/preview",
        {"scene": "alpha", "box": "12,0,-0.9,4.5,1.9,1.6,0"},
    )
    assert status == 200
    grid = tensor_from_bytes(body)
    assert grid.shape == (16, 128, 1)
    count = int(headers["X-Mask-Pixel-Count"])
    assert count == int((grid != 0).sum()) > 0


def test_mask_preview_out_of_fov_is_empty_200(server):
    status, headers, body = request(
        "POST", f"{server['base']}/mask/preview",
        {"scene": "alpha", "box": "10,0,30,4.5,1.9,1.6,0"},
    )
    assert status == 200
    assert int(headers["X-Mask-Pixel-Count"]) == 0
    assert (tensor_from_bytes(body) == 0).all()


def test_mask_preview_invalid_box_422(server):
    status, _, _ = request(
        "POST", f"{server['base']}/mask/preview", {"scene": "alpha", "box": "1,2,3"}
    )
    assert status == 422
    status, _, _ = request(
        "POST", f"{server['base']}/mask/preview",
        {"scene": "alpha", "box": "10,0,0,-4,2,1.5,0"},
    )
    assert status == 422


def test_mask_preview_unknown_scene_404(server):
    status, _, _ = request(
        "POST", f"{server['base']}/mask/preview",
        {"scene": "ghost", "box": "12,0,-0.9,4.5,1.9,1.6,0"},
    )
    assert status == 404


def test_job_validation(server):
    base = server["base"]
    status, _, _ = request("POST", f"{base}/jobs", {"scene": "alpha", "box.0": "12,0,-0.9,4.5,1.9,1.6,0"})
    assert status == 422  # seeds are mandatory
    status, _, _ = request("POST", f"{base}/jobs", {"scene": "alpha", "seed": "3"})
    assert status == 422  # no boxes
    status, _, _ = request(
        "POST", f"{base}/jobs",
        {"scene": "ghost", "seed": "3", "box.0": "12,0,-0.9,4.5,1.9,1.6,0"},
    )
    assert status == 404


def test_job_lifecycle_and_results(server):
    base = server["base"]
    status, _, body = request(
        "POST", f"{base}/jobs",
        {"scene": "alpha", "seed": "11",
         "box.0": "12,0,-0.9,4.5,1.9,1.6,0", "box.1": "9,4,-0.9,4.2,1.8,1.5,0.6"},
    )
    assert status == 202
    rec = parse_record(body.decode())
    job_id = rec["id"]
    done = wait_done(base, job_id)
    assert done["status"] == "done", done.get("error")
    refs = [v for k, v in done.items() if k.startswith("result.")]
    names = {r.rsplit("/", 1)[1] for r in refs}
    assert {"range_image", "mask_union", "mask_0", "mask_1", "bev_before",
            "bev_after", "bev_footprint", "metrics_0", "metrics_1", "points"} <= names
    for ref in refs:
        status, _, body = request("GET", f"{base}{ref}")
        assert status == 200 and len(body) > 0


def test_job_edit_locality(server):
    base = server["base"]
    _, _, body = request(
        "POST", f"{base}/jobs",
        {"scene": "beta", "seed": "21",
         "box.0": "12,0,-0.9,4.5,1.9,1.6,0", "box.1": "9,-4,-0.9,4.2,1.8,1.5,0.6"},
    )
    job_id = parse_record(body.decode())["id"]
    done = wait_done(base, job_id)
    assert done["status"] == "done", done.get("error")
    _, _, img_bytes = request("GET", f"{base}/jobs/{job_id}/results/range_image")
    _, _, mask_bytes = request("GET", f"{base}/jobs/{job_id}/results/mask_union")
    edited = tensor_from_bytes(img_bytes)
    union = tensor_from_bytes(mask_bytes)[:, :, 0] != 0

    # project the scene exactly like the service does
    from rangeforge import project, read_velodyne_bin

    cloud = read_velodyne_bin(server["scenes"] / "beta.bin")
    base_img = project(cloud, GRID).image.as_grid()
    changed = np.any(base_img != edited, axis=2)
    assert changed.any()
    assert np.all(union[changed])

    # BEV diff cells all fall inside the published edit footprint
    _, _, before_b = request("GET", f"{base}/jobs/{job_id}/results/bev_before")
    _, _, after_b = request("GET", f"{base}/jobs/{job_id}/results/bev_after")
    _, _, foot_b = request("GET", f"{base}/jobs/{job_id}/results/bev_footprint")
    diff = tensor_from_bytes(before_b) != tensor_from_bytes(after_b)
    footprint = tensor_from_bytes(foot_b) > 0
    assert np.all(footprint[diff])


def test_job_determinism_bit_exact(server):
    base = server["base"]
    payload = {"scene": "alpha", "seed": "33", "box.0": "12,0,-0.9,4.5,1.9,1.6,0"}
    artifacts = []
    for _ in range(2):
        _, _, body = request("POST", f"{base}/jobs", payload)
        job_id = parse_record(body.decode())["id"]
        done = wait_done(base, job_id)
        assert done["status"] == "done", done.get("error")
        _, _, img = request("GET", f"{base}/jobs/{job_id}/results/range_image")
        _, _, pts = request("GET", f"{base}/jobs/{job_id}/results/points")
        artifacts.append((img, pts))
    assert artifacts[0] == artifacts[1]


def test_job_matches_cli_chaining(server, tmp_path):
    """A service job and the CLI produce bit-identical edits."""
    base = server["base"]
    box = "12,0,-0.9,4.5,1.9,1.6,0"
    _, _, body = request(
        "POST", f"{base}/jobs", {"scene": "alpha", "seed": "44", "box.0": box}
    )
    job_id = parse_record(body.decode())["id"]
    done = wait_done(base, job_id)
    assert done["status"] == "done"
    _, _, svc_img = request("GET", f"{base}/jobs/{job_id}/results/range_image")

    out = tmp_path / "cli"
    assert run_cli(["generate", "--checkpoint", server["ckpt"],
                    "--scan", server["scenes"] / "alpha.bin",
                    "--box", box, "--seed", 44, "--out-dir", out, *GRID_FLAGS]) == 0
    assert (out / "edited.rvt").read_bytes() == svc_img


def test_job_failed_for_out_of_fov_box(server):
    base = server["base"]
    _, _, body = request(
        "POST", f"{base}/jobs",
        {"scene": "alpha", "seed": "1", "box.0": "10,0,30,4,2,1.5,0"},
    )
    job_id = parse_record(body.decode())["id"]
    done = wait_done(base, job_id)
    assert done["status"] == "failed"
    assert "field of view" in done["error"]


def test_delete_job(server):
    base = server["base"]
    _, _, body = request(
        "POST", f"{base}/jobs",
        {"scene": "alpha", "seed": "2", "box.0": "12,0,-0.9,4.5,1.9,1.6,0"},
    )
    job_id = parse_record(body.decode())["id"]
    wait_done(base, job_id)
    status, _, _ = request("DELETE", f"{base}/jobs/{job_id}")
    assert status == 200
    status, _, _ = request("GET", f"{base}/jobs/{job_id}")
    assert status == 404
    status, _, _ = request("DELETE", f"{base}/jobs/{job_id}")
    assert status == 404


def test_delete_running_job_409(server):
    service = server["service"]
    base = server["base"]
    gate = threading.Event()
    original = service._execute

    def slow_execute(job):
        gate.wait(timeout=10)
        return original(job)

    service._execute = slow_execute
    try:
        _, _, body = request(
            "POST", f"{base}/jobs",
            {"scene": "alpha", "seed": "3", "box.0": "12,0,-0.9,4.5,1.9,1.6,0"},
        )
        job_id = parse_record(body.decode())["id"]
        deadline = time.time() + 5
        while time.time() < deadline:
            _, _, b = request("GET", f"{base}/jobs/{job_id}")
            if parse_record(b.decode())["status"] == "running":
                break
            time.sleep(0.01)
        status, _, _ = request("DELETE", f"{base}/jobs/{job_id}")
        assert status == 409
    finally:
        service._execute = original
        gate.set()
    wait_done(base, job_id)


def test_scene_files_never_mutated(server):
    before = {p.name: p.read_bytes() for p in server["scenes"].iterdir()}
    _, _, body = request(
        "POST", f"{server['base']}/jobs",
        {"scene": "beta", "seed": "5", "box.0": "12,0,-0.9,4.5,1.9,1.6,0"},
    )
    wait_done(server["base"], parse_record(body.decode())["id"])
    after = {p.name: p.read_bytes() for p in server["scenes"].iterdir()}
    assert before == after


def test_options_cors(server):
    status, headers, _ = request("OPTIONS", f"{server['base']}/scenes")
    assert status == 204
    assert headers.get("Access-Control-Allow-Origin") == "*"


def test_bounded_queue_rejects_overflow(server):
    from rangeforge import OrientedBox
    from rangeforge.service import EditService, ServiceError

    svc = EditService(server["ckpt"], server["scenes"], cfg=GRID, queue_depth=1)
    gate = threading.Event()
    svc._execute = lambda job: (gate.wait(10), {})[1]
    boxes = [OrientedBox(12, 0, -0.9, 4.5, 1.9, 1.6, 0)]
    try:
        with pytest.raises(ServiceError) as err:
            for i in range(4):  # 1 running + 1 queued at most
                svc.submit("alpha", boxes, i)
        assert err.value.status == 503
    finally:
        gate.set()
        svc.stop()
