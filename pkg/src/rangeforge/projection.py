"""Invertible spherical projection between point clouds and range images.

A point (x, y, z) maps to (r, theta, phi) with theta = atan2(y, x) and
phi = atan2(z, hypot(x, y)). Azimuth bins the columns (theta = 0 at the
image center, increasing to the left edge), elevation bins the rows (row 0
at phi_max). Collisions keep the nearest return, like a first-return
scanner. Inversion places one point per returned pixel at the bin-center
angles, so project(invert(img)) reproduces img bit-exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .types import Point, PointCloud, RangeImage

TWO_PI = 2.0 * math.pi

# Relative slack on the r_max cap. Re-projecting a reconstructed point
# recomputes r with a few ulps of rounding; without slack a stored range of
# exactly r_max could be dropped. Stored ranges are still clamped to r_max.
_CAP_SLACK = 1e-9


@dataclass(frozen=True)
class ProjectionConfig:
    """Grid geometry: HDL-64-style 64x1024 at elevation [-24.8, +2.0] degrees."""

    height: int = 64
    width: int = 1024
    phi_min: float = math.radians(-24.8)
    phi_max: float = math.radians(2.0)
    r_max: float = 80.0

    def __post_init__(self) -> None:
        if self.height < 2 or self.width < 2:
            raise ValueError("projection grid needs H, W >= 2")
        if not self.phi_min < self.phi_max:
            raise ValueError("phi_min must be below phi_max")
        if self.r_max <= 0:
            raise ValueError("r_max must be positive")

    @property
    def phi_span(self) -> float:
        return self.phi_max - self.phi_min

    def quantization_bound(self) -> float:
        """Angular cell diagonal: round-trip error is below r times this."""
        return math.hypot(TWO_PI / self.width, self.phi_span / self.height)


@dataclass
class ProjectionResult:
    """Range image plus the per-point pixel assignment table.

    rows/cols are -1 for points that were dropped (out of the elevation
    field of view, beyond r_max, or at the origin). winner_index[r, c] is
    the cloud index whose return the pixel kept, -1 where no return.
    """

    image: RangeImage
    rows: np.ndarray
    cols: np.ndarray
    winner_index: np.ndarray

    def assigned(self) -> np.ndarray:
        return self.rows >= 0


def cartesian_to_spherical(p: Point) -> tuple[float, float, float]:
    """(r, theta, phi) of a single point; the origin has no defined angles."""
    r = p.radius()
    if r == 0.0:
        raise ValueError("angles are undefined at the origin")
    theta = math.atan2(p.y, p.x)
    phi = math.atan2(p.z, math.hypot(p.x, p.y))
    return r, theta, phi


def pixel_of(theta: float, phi: float, cfg: ProjectionConfig) -> tuple[int, int] | None:
    """Grid cell of a direction, or None when phi is outside the field of view."""
    if not cfg.phi_min <= phi <= cfg.phi_max:
        return None
    col = int(math.floor(cfg.width * (0.5 - theta / TWO_PI))) % cfg.width
    row = int(math.floor(cfg.height * (cfg.phi_max - phi) / cfg.phi_span))
    row = min(max(row, 0), cfg.height - 1)
    return row, col


def _spherical_arrays(xyz: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    r = np.sqrt(np.einsum("ij,ij->i", xyz, xyz))
    theta = np.arctan2(xyz[:, 1], xyz[:, 0])
    phi = np.arctan2(xyz[:, 2], np.hypot(xyz[:, 0], xyz[:, 1]))
    return r, theta, phi


def project(cloud: PointCloud, cfg: ProjectionConfig | None = None) -> ProjectionResult:
    """Rasterize a cloud onto the range grid, keeping the nearest return per pixel.

    The result is independent of input point order: candidates are ranked by
    (range, x, y, z, intensity), so exact duplicates tie harmlessly. Points at
    the origin, outside the elevation FOV, or beyond r_max are dropped and get
    assignment -1.
    """
    cfg = cfg or ProjectionConfig()
    n = len(cloud)
    rows = np.full(n, -1, dtype=np.int64)
    cols = np.full(n, -1, dtype=np.int64)
    winner = np.full((cfg.height, cfg.width), -1, dtype=np.int64)
    if n == 0:
        return ProjectionResult(RangeImage.empty(cfg.height, cfg.width), rows, cols, winner)

    xyz = cloud.xyz
    r, theta, phi = _spherical_arrays(xyz)
    keep = (
        (r > 0.0)
        & (r <= cfg.r_max * (1.0 + _CAP_SLACK))
        & (phi >= cfg.phi_min)
        & (phi <= cfg.phi_max)
    )
    idx = np.nonzero(keep)[0]
    if idx.size == 0:
        return ProjectionResult(RangeImage.empty(cfg.height, cfg.width), rows, cols, winner)

    col = np.floor(cfg.width * (0.5 - theta[idx] / TWO_PI)).astype(np.int64) % cfg.width
    row = np.floor(cfg.height * (cfg.phi_max - phi[idx]) / cfg.phi_span).astype(np.int64)
    np.clip(row, 0, cfg.height - 1, out=row)
    rows[idx] = row
    cols[idx] = col

    # Canonical order: pixel, then range, then coordinate tuple. First entry
    # per pixel wins, which is the permutation-invariant nearest return.
    pix = row * cfg.width + col
    ri = r[idx]
    order = np.lexsort(
        (cloud.intensity[idx], xyz[idx, 2], xyz[idx, 1], xyz[idx, 0], ri, pix)
    )
    pix_sorted = pix[order]
    first = np.concatenate(([True], pix_sorted[1:] != pix_sorted[:-1]))
    win_local = order[first]
    win_pix = pix[win_local]
    win_global = idx[win_local]

    range_flat = np.zeros(cfg.height * cfg.width, dtype=np.float32)
    inten_flat = np.zeros(cfg.height * cfg.width, dtype=np.float32)
    range_flat[win_pix] = np.minimum(ri[win_local], cfg.r_max).astype(np.float32)
    inten_flat[win_pix] = cloud.intensity[idx][win_local].astype(np.float32)
    winner.reshape(-1)[win_pix] = win_global

    image = RangeImage(
        range_flat.reshape(cfg.height, cfg.width), inten_flat.reshape(cfg.height, cfg.width)
    )
    return ProjectionResult(image, rows, cols, winner)


def bin_center_angles(cfg: ProjectionConfig) -> tuple[np.ndarray, np.ndarray]:
    """(theta_c per column, phi_c per row) at cell centers."""
    cols = np.arange(cfg.width, dtype=np.float64)
    rows = np.arange(cfg.height, dtype=np.float64)
    theta_c = (0.5 - (cols + 0.5) / cfg.width) * TWO_PI
    phi_c = cfg.phi_max - (rows + 0.5) / cfg.height * cfg.phi_span
    return theta_c, phi_c


def invert(
    img: RangeImage,
    cfg: ProjectionConfig | None = None,
    pixel_filter: np.ndarray | None = None,
) -> PointCloud:
    """One point per returned pixel, at the pixel's bin-center direction.

    pixel_filter optionally restricts output to pixels where it is True.
    Output order is row-major over pixels.
    """
    cfg = cfg or ProjectionConfig()
    if img.shape != (cfg.height, cfg.width):
        raise ValueError(f"image shape {img.shape} does not match config grid")
    select = img.returns_mask()
    if pixel_filter is not None:
        if pixel_filter.shape != select.shape:
            raise ValueError("pixel filter shape mismatch")
        select = select & pixel_filter
    rr, cc = np.nonzero(select)
    if rr.size == 0:
        return PointCloud()

    theta_c, phi_c = bin_center_angles(cfg)
    th = theta_c[cc]
    ph = phi_c[rr]
    rng = img.range_m[rr, cc].astype(np.float64)
    cos_phi = np.cos(ph)
    data = np.empty((rr.size, 4), dtype=np.float64)
    data[:, 0] = rng * cos_phi * np.cos(th)
    data[:, 1] = rng * cos_phi * np.sin(th)
    data[:, 2] = rng * np.sin(ph)
    data[:, 3] = img.intensity[rr, cc].astype(np.float64)
    return PointCloud(data)
