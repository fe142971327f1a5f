"""Semantic masks in range-view space: labeled-point masks, authored-box
masks, convex-hull regularization, scanline rasterization, and the
latent-resolution downsampling used to guide generation.

Hull geometry runs on integer pixel coordinates, so orientation tests are
exact. Azimuth wraparound is handled by unwrapping seam-crossing pixel sets
onto a doubled column range before the hull step and folding the rasterized
result back mod W.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .projection import ProjectionConfig, ProjectionResult
from .types import NO_RETURN, OrientedBox, RangeImage, SemanticMask

# Box-surface sampling is pseudo-random but fixed: sample n is identical for
# every call, so a larger samples_per_face draws a superset of a smaller one.
_FACE_SAMPLE_SEED = 0x5EED


@dataclass(frozen=True)
class PixelPolygon:
    """Convex polygon over pixel centers, counter-clockwise, no collinear runs."""

    vertices: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        if len(self.vertices) < 3:
            raise ValueError("polygon needs at least 3 vertices")


@dataclass(frozen=True)
class DegenerateHull:
    """Hull of fewer than 3 non-collinear pixels: a point or a segment.

    Carries the source pixels so rasterization can fall back to dilating
    them directly.
    """

    endpoints: tuple[tuple[int, int], ...]
    pixels: tuple[tuple[int, int], ...]


def _as_pixel_array(pixels) -> np.ndarray:
    if isinstance(pixels, SemanticMask):
        return pixels.pixels()
    arr = np.asarray(list(pixels) if not isinstance(pixels, np.ndarray) else pixels)
    if arr.size == 0:
        return arr.reshape(0, 2).astype(np.int64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("pixels must be (row, col) pairs")
    return arr.astype(np.int64)


def _cross(o, a, b) -> int:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(pixels) -> PixelPolygon | DegenerateHull:
    """Monotone-chain hull of a pixel set (exact integer arithmetic).

    Returns a DegenerateHull for sets with fewer than 3 non-collinear
    pixels; collinear boundary points are never emitted as vertices.
    """
    arr = _as_pixel_array(pixels)
    if arr.shape[0] == 0:
        raise ValueError("convex hull of an empty pixel set")
    uniq = np.unique(arr, axis=0)
    pts = [tuple(int(v) for v in p) for p in uniq]
    if len(pts) == 1:
        return DegenerateHull(endpoints=(pts[0],), pixels=tuple(pts))
    if len(pts) == 2:
        return DegenerateHull(endpoints=(pts[0], pts[1]), pixels=tuple(pts))

    lower: list[tuple[int, int]] = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[tuple[int, int]] = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        # All points collinear; unique points are sorted, ends are extremes.
        return DegenerateHull(endpoints=(pts[0], pts[-1]), pixels=tuple(pts))
    return PixelPolygon(tuple(hull))


def _frac_ceil(f: Fraction) -> int:
    return -((-f.numerator) // f.denominator)


def _frac_floor(f: Fraction) -> int:
    return f.numerator // f.denominator


def _fill_convex(poly: PixelPolygon, height: int, width: int) -> np.ndarray:
    """Scanline fill: pixels whose integer centers are inside or on poly."""
    bits = np.zeros((height, width), dtype=bool)
    verts = poly.vertices
    n = len(verts)
    rmin = max(0, min(v[0] for v in verts))
    rmax = min(height - 1, max(v[0] for v in verts))
    for r in range(rmin, rmax + 1):
        xs: list[Fraction] = []
        for i in range(n):
            (r1, c1), (r2, c2) = verts[i], verts[(i + 1) % n]
            if r1 == r2:
                if r1 == r:
                    xs.append(Fraction(c1))
                    xs.append(Fraction(c2))
                continue
            if min(r1, r2) <= r <= max(r1, r2):
                t = Fraction(r - r1, r2 - r1)
                xs.append(Fraction(c1) + t * (c2 - c1))
        if not xs:
            continue
        lo, hi = min(xs), max(xs)
        c0 = max(0, _frac_ceil(lo))
        c1_ = min(width - 1, _frac_floor(hi))
        if c0 <= c1_:
            bits[r, c0 : c1_ + 1] = True
    return bits


def _dilate_pixels(pixels, height: int, width: int) -> np.ndarray:
    bits = np.zeros((height, width), dtype=bool)
    for r, c in pixels:
        r0, r1 = max(0, r - 1), min(height - 1, r + 1)
        c0, c1 = max(0, c - 1), min(width - 1, c + 1)
        bits[r0 : r1 + 1, c0 : c1 + 1] = True
    return bits


def rasterize_hull(hull: PixelPolygon | DegenerateHull, height: int, width: int) -> SemanticMask:
    """Mask of pixels covered by the hull.

    Proper polygons are scanline-filled over pixel centers (inclusive of the
    boundary). Degenerate hulls fall back to a 3x3 dilation of their source
    pixels, clipped at the borders, so tiny or distant objects stay editable.
    """
    if isinstance(hull, DegenerateHull):
        return SemanticMask(_dilate_pixels(hull.pixels, height, width))
    for r, c in hull.vertices:
        if not (0 <= r < height and 0 <= c < width):
            raise ValueError(f"vertex ({r}, {c}) outside {height}x{width} grid")
    return SemanticMask(_fill_convex(hull, height, width))


def seam_split(pixels, width: int) -> np.ndarray:
    """Unwrap a pixel set that crosses the azimuth seam.

    When the column extent exceeds W/2 and shifting the low-side columns by
    +W makes the set more compact, the shifted set is returned (columns may
    then reach 2W-1) and the hull pipeline runs in that unwrapped space.
    Compact and full-ring sets come back unchanged.
    """
    arr = _as_pixel_array(pixels)
    if arr.shape[0] == 0:
        return arr
    cmin, cmax = int(arr[:, 1].min()), int(arr[:, 1].max())
    extent = cmax - cmin
    if extent <= width // 2:
        return arr
    shifted = arr.copy()
    low = shifted[:, 1] < width // 2
    shifted[low, 1] += width
    new_extent = int(shifted[:, 1].max()) - int(shifted[:, 1].min())
    return shifted if new_extent < extent else arr


def hull_mask(pixels, height: int, width: int) -> SemanticMask:
    """Full regularization pipeline: seam unwrap, convex hull, rasterize, rewrap."""
    arr = seam_split(pixels, width)
    if arr.shape[0] == 0:
        return SemanticMask.zeros(height, width)
    hull = convex_hull(arr)
    if int(arr[:, 1].max()) < width:
        return rasterize_hull(hull, height, width)
    wide = (
        _dilate_pixels(hull.pixels, height, 2 * width)
        if isinstance(hull, DegenerateHull)
        else _fill_convex(hull, height, 2 * width)
    )
    bits = wide[:, :width] | wide[:, width:]
    return SemanticMask(bits)


def mask_from_labeled_points(
    labels: np.ndarray,
    target_class: int,
    assignment: ProjectionResult,
) -> SemanticMask:
    """Mask every pixel that at least one target-labeled point projects to.

    Uses the assignment table from project(), so occluded points still mark
    their pixel. Label count must match the projected cloud.
    """
    labels = np.asarray(labels)
    if labels.shape[0] != assignment.rows.shape[0]:
        raise ValueError(
            f"{labels.shape[0]} labels for {assignment.rows.shape[0]} projected points"
        )
    h, w = assignment.image.shape
    sel = (labels == target_class) & assignment.assigned()
    bits = np.zeros((h, w), dtype=bool)
    bits[assignment.rows[sel], assignment.cols[sel]] = True
    return SemanticMask(bits)


def box_surface_samples(box: OrientedBox, samples_per_face: int = 400) -> np.ndarray:
    """Deterministic uniform samples on the box surface, (6 * n, 3) world points.

    Per-face sample sequences are fixed prefixes: raising samples_per_face
    only appends samples, so derived masks can only grow.
    """
    if samples_per_face < 1:
        raise ValueError("samples_per_face must be positive")
    h = box.half_extents()
    locals_: list[np.ndarray] = []
    # Faces: +-x, +-y, +-z in the box frame; two free axes sampled per face.
    for axis in range(3):
        for sign in (-1.0, 1.0):
            rng = np.random.Generator(
                np.random.PCG64(_FACE_SAMPLE_SEED + 2 * axis + (sign > 0))
            )
            uv = rng.random((samples_per_face, 2)) * 2.0 - 1.0
            face = np.empty((samples_per_face, 3))
            free = [a for a in range(3) if a != axis]
            face[:, axis] = sign * h[axis]
            face[:, free[0]] = uv[:, 0] * h[free[0]]
            face[:, free[1]] = uv[:, 1] * h[free[1]]
            locals_.append(face)
    return box.to_world(np.concatenate(locals_, axis=0))


def mask_from_box(
    box: OrientedBox, cfg: ProjectionConfig, samples_per_face: int = 400
) -> SemanticMask:
    """Project sampled box-surface points; mask their pixels.

    Purely angular: samples beyond r_max still mark pixels. A box entirely
    outside the elevation FOV yields an all-zero mask.
    """
    pts = box_surface_samples(box, samples_per_face)
    r = np.sqrt(np.einsum("ij,ij->i", pts, pts))
    ok = r > 0.0
    theta = np.arctan2(pts[ok, 1], pts[ok, 0])
    phi = np.arctan2(pts[ok, 2], np.hypot(pts[ok, 0], pts[ok, 1]))
    infov = (phi >= cfg.phi_min) & (phi <= cfg.phi_max)
    bits = np.zeros((cfg.height, cfg.width), dtype=bool)
    if np.any(infov):
        col = np.floor(cfg.width * (0.5 - theta[infov] / (2.0 * np.pi))).astype(np.int64)
        col %= cfg.width
        row = np.floor(
            cfg.height * (cfg.phi_max - phi[infov]) / cfg.phi_span
        ).astype(np.int64)
        np.clip(row, 0, cfg.height - 1, out=row)
        bits[row, col] = True
    return SemanticMask(bits)


def apply_mask(img: RangeImage, mask: SemanticMask) -> RangeImage:
    """Masked pixels become no-return; everything else copies through."""
    if img.shape != mask.shape:
        raise ValueError(f"image {img.shape} vs mask {mask.shape}")
    rng = img.range_m.copy()
    inten = img.intensity.copy()
    rng[mask.bits] = NO_RETURN
    inten[mask.bits] = 0.0
    return RangeImage(rng, inten)


def downsample_mask(mask: SemanticMask, factor_h: int, factor_w: int) -> SemanticMask:
    """Max-pool to latent resolution: a block is set if any pixel in it is set.

    Conservative by construction; the region-focused loss never ignores a
    latent cell that covers masked pixels.
    """
    h, w = mask.shape
    if factor_h < 1 or factor_w < 1:
        raise ValueError("factors must be >= 1")
    if h % factor_h or w % factor_w:
        raise ValueError(f"{h}x{w} mask not divisible by ({factor_h}, {factor_w})")
    blocks = mask.bits.reshape(h // factor_h, factor_h, w // factor_w, factor_w)
    return SemanticMask(blocks.any(axis=(1, 3)))
