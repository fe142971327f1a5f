"""Scenario-editing HTTP service.

Endpoints (bodies are flat key=value text unless noted; tensors use the
TensorFile layout):

    GET    /scenes                  list of scene ids
    GET    /scenes/{id}/bev         BEV occupancy raster (tensor)
    POST   /mask/preview            scene=<id> box=<cx,cy,cz,l,w,h,yaw>
                                    -> mask tensor, X-Mask-Pixel-Count header
    POST   /jobs                    scene=<id> seed=<int> box.0=... box.1=...
                                    -> job record with id
    GET    /jobs/{id}               status record; result refs when done
    GET    /jobs/{id}/results/{n}   result artifact (tensor, record, or .bin)
    DELETE /jobs/{id}               409 while running

One generation job runs at a time through a FIFO queue. Jobs are
deterministic: identical body and seed produce bit-identical artifacts.
Scene files are never mutated. BEV rasters map vehicle +x (forward) to row 0
and +y (left) to column 0 over a square of +-extent meters.
"""
from __future__ import annotations

import queue
import re
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from . import records, tensorfile
from .dataset import read_velodyne_bin
from .diffusion import load_checkpoint, schedule_from_manifest
from .editing import box_edit_mask, edit_scene_image, union_mask
from .metrics import evaluate_masked_region
from .projection import ProjectionConfig, invert, project
from .types import OrientedBox, PointCloud, SemanticMask

BEV_EXTENT = 40.0
BEV_BINS = 320


class ServiceError(Exception):
    def __init__(self, status: int, message: str) -> None:
        super().__init__(message)
        self.status = status


def bev_raster(cloud: PointCloud, extent: float = BEV_EXTENT, bins: int = BEV_BINS) -> np.ndarray:
    """(bins, bins, 1) float32 occupancy counts; forward is up, left is left."""
    xy = cloud.xyz[:, :2]
    keep = np.all(np.abs(xy) < extent, axis=1)
    xy = xy[keep]
    cell = 2.0 * extent / bins
    rows = np.clip(((extent - xy[:, 0]) / cell).astype(np.int64), 0, bins - 1)
    cols = np.clip(((extent - xy[:, 1]) / cell).astype(np.int64), 0, bins - 1)
    grid = np.zeros((bins, bins), dtype=np.float32)
    np.add.at(grid, (rows, cols), 1.0)
    return grid[:, :, None]


def parse_box_record(text: str) -> OrientedBox:
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != 7:
        raise ServiceError(422, f"box needs 7 numbers, got {text!r}")
    try:
        cx, cy, cz, l, w, h, yaw = (float(v) for v in parts)
        return OrientedBox(cx, cy, cz, l, w, h, yaw)
    except ValueError as exc:
        raise ServiceError(422, f"invalid box: {exc}") from exc


class SceneStore:
    """Read-only view of a directory of KITTI-style scans."""

    def __init__(self, directory: str | Path) -> None:
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise ValueError(f"scene directory {self.directory} does not exist")

    def ids(self) -> list[str]:
        return sorted(
            p.stem for p in self.directory.glob("*.bin") if not p.stem.endswith(".labels")
        )

    def cloud(self, scene_id: str) -> PointCloud:
        path = self.directory / f"{scene_id}.bin"
        if not re.fullmatch(r"[A-Za-z0-9._-]+", scene_id) or not path.is_file():
            raise ServiceError(404, f"unknown scene {scene_id!r}")
        return read_velodyne_bin(path)


@dataclass
class EditJob:
    id: str
    scene: str
    boxes: list[OrientedBox]
    seed: int
    status: str = "queued"  # queued -> running -> done | failed
    error: str = ""
    results: dict[str, tuple[str, bytes]] = field(default_factory=dict)

    def to_record(self) -> dict:
        rec: dict = {
            "id": self.id,
            "scene": self.scene,
            "seed": self.seed,
            "boxes": len(self.boxes),
            "status": self.status,
        }
        for i, b in enumerate(self.boxes):
            rec[f"box.{i}"] = f"{b.cx!r},{b.cy!r},{b.cz!r},{b.length!r},{b.width_m!r},{b.height_m!r},{b.yaw!r}"
        if self.status == "failed":
            rec["error"] = self.error
        if self.status == "done":
            for i, name in enumerate(sorted(self.results)):
                rec[f"result.{i}"] = f"/jobs/{self.id}/results/{name}"
        return rec


class EditService:
    """Owns the model, scenes, and the single-worker job queue."""

    def __init__(
        self,
        checkpoint: str | Path,
        scene_dir: str | Path,
        cfg: ProjectionConfig | None = None,
        queue_depth: int = 0,
    ) -> None:
        self.model, sched_fields = load_checkpoint(checkpoint)
        self.sched = schedule_from_manifest(sched_fields)
        self.scenes = SceneStore(scene_dir)
        self.cfg = cfg or ProjectionConfig()
        self._jobs: dict[str, EditJob] = {}
        self._lock = threading.Lock()
        self._queue: "queue.Queue[str | None]" = queue.Queue(maxsize=queue_depth)
        self._counter = 0
        self._worker = threading.Thread(target=self._run_worker, daemon=True)
        self._worker.start()

    # -- job machinery ---------------------------------------------------

    def submit(self, scene: str, boxes: list[OrientedBox], seed: int) -> EditJob:
        self.scenes.cloud(scene)  # 404 for unknown scenes before queueing
        with self._lock:
            self._counter += 1
            job = EditJob(id=f"job-{self._counter:04d}", scene=scene, boxes=boxes, seed=seed)
            self._jobs[job.id] = job
        try:
            self._queue.put_nowait(job.id)
        except queue.Full:
            with self._lock:
                del self._jobs[job.id]
            raise ServiceError(503, "job queue is full") from None
        return job

    def get(self, job_id: str) -> EditJob:
        with self._lock:
            job = self._jobs.get(job_id)
        if job is None:
            raise ServiceError(404, f"unknown job {job_id!r}")
        return job

    def delete(self, job_id: str) -> None:
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None:
                raise ServiceError(404, f"unknown job {job_id!r}")
            if job.status == "running":
                raise ServiceError(409, f"job {job_id} is running")
            del self._jobs[job_id]

    def stop(self) -> None:
        self._queue.put(None)
        self._worker.join(timeout=10)

    def _run_worker(self) -> None:
        while True:
            job_id = self._queue.get()
            if job_id is None:
                return
            with self._lock:
                job = self._jobs.get(job_id)
                if job is None:  # deleted while queued
                    continue
                job.status = "running"
            try:
                results = self._execute(job)
            except Exception as exc:
                with self._lock:
                    job.status = "failed"
                    job.error = str(exc)
                continue
            with self._lock:
                job.results = results
                job.status = "done"

    def _execute(self, job: EditJob) -> dict[str, tuple[str, bytes]]:
        cloud = self.scenes.cloud(job.scene)
        base_img = project(cloud, self.cfg).image
        results: dict[str, tuple[str, bytes]] = {}
        current = base_img
        masks: list[SemanticMask] = []
        for i, box in enumerate(job.boxes):
            # chaining single edits keeps per-edit metrics available and is
            # bit-identical to one multi-box pass (seed s + i per edit)
            edited, step_masks = edit_scene_image(
                current, [box], job.seed + i, self.model, self.sched, self.cfg
            )
            mask = step_masks[0]
            report = evaluate_masked_region(edited, current, mask, self.cfg)
            results[f"metrics_{i}"] = (
                "text", records.dump_record(report.to_record()).encode()
            )
            results[f"mask_{i}"] = (
                "tensor",
                tensorfile.tensor_bytes(mask.bits.astype(np.float32)[:, :, None]),
            )
            masks.append(mask)
            current = edited
        edited_cloud = invert(current, self.cfg)
        results["range_image"] = ("tensor", tensorfile.tensor_bytes(current.as_grid()))
        union = union_mask(masks)
        results["mask_union"] = (
            "tensor",
            tensorfile.tensor_bytes(union.bits.astype(np.float32)[:, :, None]),
        )
        # before/after both derive from range images, so points outside the
        # edit sit in identical BEV cells and the diff is exactly the edit
        results["bev_before"] = (
            "tensor", tensorfile.tensor_bytes(bev_raster(invert(base_img, self.cfg)))
        )
        results["bev_after"] = ("tensor", tensorfile.tensor_bytes(bev_raster(edited_cloud)))
        # BEV cells touched by the edit: masked-pixel points from either side.
        # Any before/after BEV difference falls inside this footprint exactly.
        from .metrics import extract_masked_points

        touched = np.concatenate(
            [
                extract_masked_points(base_img, union, self.cfg).data,
                extract_masked_points(current, union, self.cfg).data,
            ]
        )
        results["bev_footprint"] = (
            "tensor", tensorfile.tensor_bytes(bev_raster(PointCloud(touched)))
        )
        results["points"] = ("bin", edited_cloud.data.astype("<f4").tobytes())
        return results

    # -- request-level operations -----------------------------------------

    def scene_list_record(self) -> dict:
        ids = self.scenes.ids()
        rec: dict = {"count": len(ids)}
        for i, sid in enumerate(ids):
            rec[f"scene.{i}"] = sid
        return rec

    def scene_bev(self, scene_id: str) -> bytes:
        return tensorfile.tensor_bytes(bev_raster(self.scenes.cloud(scene_id)))

    def mask_preview(self, scene_id: str, box: OrientedBox) -> tuple[bytes, int]:
        self.scenes.cloud(scene_id)  # existence check; grid is service-wide
        mask = box_edit_mask(box, self.cfg)
        data = tensorfile.tensor_bytes(mask.bits.astype(np.float32)[:, :, None])
        return data, mask.count()


def _parse_job_body(fields: dict[str, str]) -> tuple[str, list[OrientedBox], int]:
    scene = fields.get("scene")
    if not scene:
        raise ServiceError(422, "missing scene")
    if "seed" not in fields:
        raise ServiceError(422, "missing seed (seeds are mandatory)")
    try:
        seed = int(fields["seed"])
    except ValueError as exc:
        raise ServiceError(422, f"invalid seed: {fields['seed']!r}") from exc
    boxes: list[OrientedBox] = []
    i = 0
    while f"box.{i}" in fields:
        boxes.append(parse_box_record(fields[f"box.{i}"]))
        i += 1
    if not boxes:
        raise ServiceError(422, "no boxes (need box.0, box.1, ...)")
    return scene, boxes, seed


def make_handler(service: EditService):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        # -- plumbing ------------------------------------------------------

        def log_message(self, fmt, *args):  # keep test output quiet
            pass

        def _cors(self) -> None:
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.send_header("Access-Control-Expose-Headers", "X-Mask-Pixel-Count")

        def _reply(self, status: int, body: bytes, ctype: str, extra: dict | None = None) -> None:
            self.send_response(status)
            self._cors()
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            for k, v in (extra or {}).items():
                self.send_header(k, str(v))
            self.end_headers()
            self.wfile.write(body)

        def _reply_record(self, fields: dict, status: int = 200, extra: dict | None = None) -> None:
            self._reply(status, records.dump_record(fields).encode(), "text/plain; charset=utf-8", extra)

        def _reply_tensor(self, data: bytes, extra: dict | None = None) -> None:
            self._reply(200, data, "application/octet-stream", extra)

        def _fail(self, exc: Exception) -> None:
            if isinstance(exc, ServiceError):
                self._reply_record({"error": str(exc)}, status=exc.status)
            else:
                self._reply_record({"error": str(exc)}, status=500)

        def _body_record(self) -> dict[str, str]:
            length = int(self.headers.get("Content-Length", "0"))
            raw = self.rfile.read(length) if length else b""
            return records.parse_record(raw.decode("utf-8"))

        # -- routes --------------------------------------------------------

        def do_OPTIONS(self):
            self.send_response(204)
            self._cors()
            self.send_header("Content-Length", "0")
            self.end_headers()

        def do_GET(self):
            try:
                if self.path == "/scenes":
                    self._reply_record(service.scene_list_record())
                    return
                m = re.fullmatch(r"/scenes/([A-Za-z0-9._-]+)/bev", self.path)
                if m:
                    self._reply_tensor(service.scene_bev(m.group(1)))
                    return
                m = re.fullmatch(r"/jobs/([A-Za-z0-9-]+)", self.path)
                if m:
                    self._reply_record(service.get(m.group(1)).to_record())
                    return
                m = re.fullmatch(r"/jobs/([A-Za-z0-9-]+)/results/([A-Za-z0-9_.-]+)", self.path)
                if m:
                    job = service.get(m.group(1))
                    if job.status != "done" or m.group(2) not in job.results:
                        raise ServiceError(404, f"no result {m.group(2)!r}")
                    kind, data = job.results[m.group(2)]
                    ctype = {
                        "tensor": "application/octet-stream",
                        "bin": "application/octet-stream",
                        "text": "text/plain; charset=utf-8",
                    }[kind]
                    self._reply(200, data, ctype)
                    return
                raise ServiceError(404, f"no route {self.path}")
            except Exception as exc:
                self._fail(exc)

        def do_POST(self):
            try:
                if self.path == "/mask/preview":
                    fields = self._body_record()
                    scene = fields.get("scene")
                    if not scene:
                        raise ServiceError(422, "missing scene")
                    if "box" not in fields:
                        raise ServiceError(422, "missing box")
                    box = parse_box_record(fields["box"])
                    data, count = service.mask_preview(scene, box)
                    self._reply_tensor(data, extra={"X-Mask-Pixel-Count": count})
                    return
                if self.path == "/jobs":
                    scene, boxes, seed = _parse_job_body(self._body_record())
                    job = service.submit(scene, boxes, seed)
                    self._reply_record(job.to_record(), status=202)
                    return
                raise ServiceError(404, f"no route {self.path}")
            except Exception as exc:
                self._fail(exc)

        def do_DELETE(self):
            try:
                m = re.fullmatch(r"/jobs/([A-Za-z0-9-]+)", self.path)
                if not m:
                    raise ServiceError(404, f"no route {self.path}")
                service.delete(m.group(1))
                self._reply_record({"deleted": m.group(1)})
            except Exception as exc:
                self._fail(exc)

    return Handler


def make_server(
    port: int,
    checkpoint: str | Path,
    scene_dir: str | Path,
    cfg: ProjectionConfig | None = None,
    host: str = "127.0.0.1",
    queue_depth: int = 0,
) -> tuple[ThreadingHTTPServer, EditService]:
    import os

    scene_dir = scene_dir or os.environ.get("RANGEFORGE_DATA")
    if not scene_dir:
        raise ValueError("no scene directory (flag or RANGEFORGE_DATA)")
    service = EditService(checkpoint, scene_dir, cfg, queue_depth=queue_depth)
    server = ThreadingHTTPServer((host, port), make_handler(service))
    return server, service


def serve(
    port: int,
    checkpoint: str | Path,
    scene_dir: str | Path | None,
    cfg: ProjectionConfig | None = None,
    host: str = "127.0.0.1",
    queue_depth: int = 0,
) -> None:
    server, service = make_server(port, checkpoint, scene_dir, cfg, host, queue_depth)
    print(f"rangeforge service on http://{host}:{server.server_address[1]}", flush=True)
    try:
        server.serve_forever()
    finally:
        service.stop()
