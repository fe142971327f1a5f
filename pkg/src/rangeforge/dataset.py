"""Scan ingestion and synthetic scenes.

Readers cover the de-facto KITTI byte layouts: scans as packed little-endian
float32 (x, y, z, intensity) quadruples, per-point labels as little-endian
uint32 with the semantic class in the low 16 bits, and box annotations as
whitespace-separated text lines. The synthetic generator ray-casts a ground
plane plus car-sized boxes over the projection grid, producing labeled
scans with genuine occlusion and scanline structure for desk-scale training.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diffusion import TrainExample, make_train_example
from .masking import hull_mask, mask_from_labeled_points
from .projection import ProjectionConfig, bin_center_angles, project
from .types import OrientedBox, PointCloud

log = logging.getLogger(__name__)

# KITTI-360 semantic ids (Cityscapes id space).
CAR_CLASS_ID = 26
GROUND_CLASS_ID = 6

GROUND_Z = -1.7  # sensor height above road


def read_velodyne_bin(path: str | Path) -> PointCloud:
    """Read packed float32 (x, y, z, intensity) quadruples.

    Points with non-finite values are dropped (and counted in the log);
    intensity is clamped into [0, 1].
    """
    raw = Path(path).read_bytes()
    if len(raw) % 16:
        raise ValueError(f"{path}: length {len(raw)} is not a multiple of 16")
    data = np.frombuffer(raw, dtype="<f4").reshape(-1, 4).astype(np.float64)
    finite = np.isfinite(data).all(axis=1)
    dropped = int((~finite).sum())
    if dropped:
        log.warning("%s: dropped %d non-finite points", path, dropped)
        data = data[finite]
    data = data.copy()
    data[:, 3] = np.clip(data[:, 3], 0.0, 1.0)
    return PointCloud(data, frame_id=Path(path).stem)


def write_velodyne_bin(path: str | Path, cloud: PointCloud) -> None:
    data = cloud.data.astype("<f4")
    data[:, 3] = np.clip(data[:, 3], 0.0, 1.0)
    Path(path).write_bytes(data.tobytes())


def read_labels(path: str | Path, expected: int) -> np.ndarray:
    """Per-point semantic ids: low 16 bits of little-endian uint32 records."""
    raw = Path(path).read_bytes()
    if len(raw) != 4 * expected:
        raise ValueError(f"{path}: {len(raw)} bytes, expected {4 * expected}")
    ids = np.frombuffer(raw, dtype="<u4")
    return (ids & 0xFFFF).astype(np.int64)


def write_labels(path: str | Path, semantic: np.ndarray, instance: np.ndarray | None = None) -> None:
    semantic = np.asarray(semantic, dtype=np.uint32)
    packed = semantic & np.uint32(0xFFFF)
    if instance is not None:
        packed = packed | (np.asarray(instance, dtype=np.uint32) << np.uint32(16))
    Path(path).write_bytes(packed.astype("<u4").tobytes())


def read_boxes(path: str | Path) -> list[tuple[OrientedBox, int]]:
    """Text annotations: `class cx cy cz length width height yaw` per line."""
    boxes: list[tuple[OrientedBox, int]] = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 8:
            raise ValueError(f"{path}:{lineno}: expected 8 fields, got {len(parts)}")
        cls = int(parts[0])
        cx, cy, cz, ln, wd, ht, yaw = (float(v) for v in parts[1:])
        boxes.append((OrientedBox(cx, cy, cz, ln, wd, ht, yaw), cls))
    return boxes


def write_boxes(path: str | Path, boxes: list[tuple[OrientedBox, int]]) -> None:
    lines = [
        f"{cls} {b.cx!r} {b.cy!r} {b.cz!r} {b.length!r} {b.width_m!r} {b.height_m!r} {b.yaw!r}"
        for b, cls in boxes
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


@dataclass
class ScanRecord:
    """One scan with optional per-point labels and box annotations."""

    cloud: PointCloud
    labels: np.ndarray | None = None
    boxes: list[tuple[OrientedBox, int]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.labels is not None and len(self.labels) != len(self.cloud):
            raise ValueError("label count does not match point count")


@dataclass
class SceneSpec:
    """Deterministic toy scene: ground plane plus randomly placed cars.

    Rays are cast from the origin over the grid's angular cells (jittered
    inside each cell unless angular_jitter is off); hit ranges get clipped
    Gaussian noise of scale sigma, so every car point stays within its box
    grown by 3 sigma.
    """

    seed: int = 0
    grid: ProjectionConfig = field(default_factory=ProjectionConfig)
    ground_extent: float = 60.0
    car_count: int = 1
    radius_range: tuple[float, float] = (8.0, 30.0)
    bearing_range: tuple[float, float] = (-math.pi / 3, math.pi / 3)
    yaw_range: tuple[float, float] = (-math.pi, math.pi)
    sigma: float = 0.02
    angular_jitter: bool = True

    def __post_init__(self) -> None:
        if self.car_count < 0:
            raise ValueError("car_count must be >= 0")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")


def _ray_box_entry(dirs: np.ndarray, box: OrientedBox) -> np.ndarray:
    """Entry distance of unit rays from the origin into the box (inf for misses)."""
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    rot = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
    o = rot @ (-box.center())
    d = dirs @ rot.T
    h = box.half_extents()
    t_near = np.full(dirs.shape[0], -np.inf)
    t_far = np.full(dirs.shape[0], np.inf)
    ok = np.ones(dirs.shape[0], dtype=bool)
    for axis in range(3):
        da = d[:, axis]
        oa = o[axis]
        parallel = da == 0.0
        ok &= ~(parallel & (np.abs(oa) > h[axis]))
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (-h[axis] - oa) / da
            t2 = (h[axis] - oa) / da
        lo = np.minimum(t1, t2)
        hi = np.maximum(t1, t2)
        t_near = np.where(parallel, t_near, np.maximum(t_near, lo))
        t_far = np.where(parallel, t_far, np.minimum(t_far, hi))
    hit = ok & (t_near <= t_far) & (t_near > 0.0)
    return np.where(hit, t_near, np.inf)


def synthetic_scene(spec: SceneSpec) -> ScanRecord:
    """Ray-cast scan with labels and recorded boxes, bit-reproducible per seed."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    cfg = spec.grid

    boxes: list[tuple[OrientedBox, int]] = []
    placed: list[tuple[float, float]] = []
    for _ in range(spec.car_count):
        for _attempt in range(32):
            radius = rng.uniform(*spec.radius_range)
            bearing = rng.uniform(*spec.bearing_range)
            yaw = rng.uniform(*spec.yaw_range)
            length = rng.uniform(4.0, 4.8)
            width = rng.uniform(1.7, 2.0)
            height = rng.uniform(1.4, 1.7)
            cx, cy = radius * math.cos(bearing), radius * math.sin(bearing)
            if all((cx - px) ** 2 + (cy - py) ** 2 > 6.0**2 for px, py in placed):
                placed.append((cx, cy))
                boxes.append(
                    (OrientedBox(cx, cy, GROUND_Z + height / 2.0, length, width, height, yaw),
                     CAR_CLASS_ID)
                )
                break

    theta_c, phi_c = bin_center_angles(cfg)
    theta = np.broadcast_to(theta_c[None, :], (cfg.height, cfg.width)).copy()
    phi = np.broadcast_to(phi_c[:, None], (cfg.height, cfg.width)).copy()
    if spec.angular_jitter:
        theta += (rng.random(theta.shape) - 0.5) * (2.0 * math.pi / cfg.width)
        phi += (rng.random(phi.shape) - 0.5) * (cfg.phi_span / cfg.height)
    theta = theta.ravel()
    phi = phi.ravel()
    cos_phi = np.cos(phi)
    dirs = np.stack([cos_phi * np.cos(theta), cos_phi * np.sin(theta), np.sin(phi)], axis=1)

    # Ground plane z = GROUND_Z, limited to a disk of ground_extent.
    dz = dirs[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t_ground = np.where(dz < 0.0, GROUND_Z / dz, np.inf)
    ground_xy = dirs[:, :2] * t_ground[:, None]
    beyond = np.einsum("ij,ij->i", ground_xy, ground_xy) > spec.ground_extent**2
    t_ground = np.where(beyond, np.inf, t_ground)

    t_best = t_ground.copy()
    label = np.where(np.isfinite(t_ground), GROUND_CLASS_ID, -1)
    box_id = np.full(dirs.shape[0], -1)
    for bi, (box, _cls) in enumerate(boxes):
        t_box = _ray_box_entry(dirs, box)
        closer = t_box < t_best
        t_best = np.where(closer, t_box, t_best)
        label = np.where(closer, CAR_CLASS_ID, label)
        box_id = np.where(closer, bi, box_id)

    hit = np.isfinite(t_best)
    jitter = rng.normal(0.0, spec.sigma, size=t_best.shape)
    if spec.sigma > 0:
        np.clip(jitter, -3.0 * spec.sigma, 3.0 * spec.sigma, out=jitter)
    ranges = np.where(hit, t_best + jitter, 0.0)
    hit &= ranges > 0.0

    is_car = hit & (label == CAR_CLASS_ID)
    intensity = rng.normal(0.3, 0.05, size=t_best.shape)
    intensity[is_car] = rng.normal(0.75, 0.08, size=int(is_car.sum()))
    intensity = np.clip(intensity, 0.0, 1.0)

    data = np.empty((int(hit.sum()), 4), dtype=np.float64)
    data[:, :3] = dirs[hit] * ranges[hit][:, None]
    data[:, 3] = intensity[hit]
    return ScanRecord(
        cloud=PointCloud(data, frame_id=f"synthetic-{spec.seed}"),
        labels=label[hit].astype(np.int64),
        boxes=boxes,
    )


def select_instance_pixels(
    scan: ScanRecord,
    cfg: ProjectionConfig,
    target_class: int = CAR_CLASS_ID,
    box_index: int | None = None,
):
    """Projection result plus the raw mask of the selected instance's pixels.

    box_index narrows the target-labeled points to those inside the given
    annotation box (grown slightly for range jitter); None takes the whole
    class.
    """
    if scan.labels is None:
        raise ValueError("scan has no labels")
    result = project(scan.cloud, cfg)
    labels = scan.labels
    if box_index is not None:
        box, _cls = scan.boxes[box_index]
        inside = box.contains(scan.cloud.xyz, margin=0.25)
        labels = np.where(inside, labels, -1)
    raw = mask_from_labeled_points(labels, target_class, result)
    return result, raw


def build_training_example(
    scan: ScanRecord,
    cfg: ProjectionConfig,
    target_class: int = CAR_CLASS_ID,
    box_index: int | None = None,
    use_hull: bool = True,
) -> TrainExample | None:
    """project -> label mask -> hull pipeline -> masked image -> normalize.

    Returns None (skip) when the selected instance has no in-FOV points.
    use_hull=False keeps the raw projected-pixel mask; the ablation path.
    """
    result, raw = select_instance_pixels(scan, cfg, target_class, box_index)
    if raw.count() == 0:
        return None
    mask = hull_mask(raw.pixels(), cfg.height, cfg.width) if use_hull else raw
    return make_train_example(result.image, mask, cfg)
