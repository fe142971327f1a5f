"""Metrics demo: instance-restricted comparison of two range images.

    python3 demos/04_metrics.py
"""
import numpy as np

from rangeforge import (
    ProjectionConfig,
    RangeImage,
    SceneSpec,
    bev_histogram,
    chamfer,
    evaluate_masked_region,
    extract_masked_points,
    jsd,
    normalize_unit_sphere,
    project,
    synthetic_scene,
)
from rangeforge.dataset import build_training_example
from rangeforge.records import logfmt

grid = ProjectionConfig(height=32, width=256)
scan = synthetic_scene(SceneSpec(seed=21, grid=grid, car_count=1))
img = project(scan.cloud, grid).image
ex = build_training_example(scan, grid)

# identical inputs: every metric is zero
report = evaluate_masked_region(img, img, ex.mask, grid)
print("identical:", logfmt(report.to_record()))

# perturb ranges inside the mask and watch the metrics move
rng = np.random.Generator(np.random.PCG64(0))
noisy_range = img.range_m.copy()
jitter = rng.normal(0.0, 0.4, size=noisy_range.shape).astype(np.float32)
sel = ex.mask.bits & img.returns_mask()
noisy_range[sel] = np.clip(noisy_range[sel] + jitter[sel], 0.1, grid.r_max)
noisy = RangeImage(noisy_range, img.intensity)
report = evaluate_masked_region(noisy, img, ex.mask, grid)
print("jittered:", logfmt(report.to_record()))

gt = normalize_unit_sphere(extract_masked_points(img, ex.mask, grid))
nz = normalize_unit_sphere(extract_masked_points(noisy, ex.mask, grid))
print(f"by hand: chamfer={chamfer(gt, nz):.6f} "
      f"jsd={jsd(bev_histogram(gt), bev_histogram(nz)):.6f}")
