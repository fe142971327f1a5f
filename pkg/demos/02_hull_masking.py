"""Semantic masking demo: build a mask from labeled car points, regularize
it with a convex hull, and compare against the mask an authored box induces.

    python3 demos/02_hull_masking.py
"""
import numpy as np

from rangeforge import (
    OrientedBox,
    ProjectionConfig,
    SceneSpec,
    apply_mask,
    hull_mask,
    mask_from_box,
    mask_from_labeled_points,
    project,
    synthetic_scene,
)
from rangeforge.dataset import CAR_CLASS_ID

grid = ProjectionConfig(height=32, width=256)
scan = synthetic_scene(SceneSpec(seed=11, grid=grid, car_count=1))
res = project(scan.cloud, grid)

raw = mask_from_labeled_points(scan.labels, CAR_CLASS_ID, res)
hull = hull_mask(raw.pixels(), grid.height, grid.width)
print(f"label mask: {raw.count()} px raw -> {hull.count()} px after convex hull")
print(f"hull covers every raw pixel: {bool(np.all(hull.bits[raw.bits]))}")

box, _cls = scan.boxes[0]
authored = mask_from_box(box, grid)
authored_hull = hull_mask(authored.pixels(), grid.height, grid.width)
overlap = int((authored_hull.bits & hull.bits).sum())
print(f"authored-box mask: {authored_hull.count()} px, overlap with label mask {overlap} px")

masked = apply_mask(res.image, hull)
blanked = int((res.image.returns_mask() & ~masked.returns_mask()).sum())
print(f"apply_mask blanked {blanked} returned pixels inside the hull")

# quick ASCII view of the mask neighborhood
rows = np.nonzero(hull.bits.any(axis=1))[0]
cols = np.nonzero(hull.bits.any(axis=0))[0]
r0, r1 = rows.min(), rows.max() + 1
c0, c1 = max(0, cols.min() - 2), min(grid.width, cols.max() + 3)
for r in range(r0, r1):
    line = "".join(
        "#" if hull.bits[r, c] and raw.bits[r, c]
        else "+" if hull.bits[r, c]
        else "."
        for c in range(c0, c1)
    )
    print(line)
print("(# raw point pixels, + hull fill, . background)")
