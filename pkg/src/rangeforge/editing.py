"""Sequential box edits on a scene's range image.

Each edit derives a hull-regularized mask from the authored box, blanks the
region, and samples the generator conditioned on the masked image. Edit i of
a job seeded s uses seed s + i, so an n-box job is bit-identical to chaining
n single-box runs with seeds s, s+1, ..., with the range image as the
interchange format.
"""
from __future__ import annotations

import numpy as np

from .diffusion import NoiseSchedule, sample
from .masking import apply_mask, hull_mask, mask_from_box
from .projection import ProjectionConfig
from .types import OrientedBox, RangeImage, SemanticMask


def box_edit_mask(box: OrientedBox, cfg: ProjectionConfig) -> SemanticMask:
    """Hull-regularized edit region of an authored box (empty when out of FOV)."""
    pixels = mask_from_box(box, cfg)
    return hull_mask(pixels.pixels(), cfg.height, cfg.width)


def edit_scene_image(
    img: RangeImage,
    boxes: list[OrientedBox],
    seed: int,
    model,
    sched: NoiseSchedule,
    cfg: ProjectionConfig,
) -> tuple[RangeImage, list[SemanticMask]]:
    """Apply boxes in order; returns the edited image and per-edit masks."""
    if not boxes:
        raise ValueError("no boxes to apply")
    current = img
    masks: list[SemanticMask] = []
    for i, box in enumerate(boxes):
        mask = box_edit_mask(box, cfg)
        if mask.count() == 0:
            raise ValueError(f"box {i} projects outside the field of view")
        x_m = apply_mask(current, mask)
        rng = np.random.Generator(np.random.PCG64(seed + i))
        current = sample(x_m, mask, model, sched, rng, cfg, original=current)
        masks.append(mask)
    return current, masks


def union_mask(masks: list[SemanticMask]) -> SemanticMask:
    out = masks[0]
    for m in masks[1:]:
        out = out.union(m)
    return out
