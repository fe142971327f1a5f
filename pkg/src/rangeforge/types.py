"""Shared domain types: points, clouds, range images, masks, oriented boxes.

All types are immutable values after construction (arrays are set
non-writeable), so they are safe to share across threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Range value marking a pixel with no LiDAR return. Intensity is forced to
# zero at these pixels so normalization needs no special casing.
NO_RETURN = 0.0


@dataclass(frozen=True)
class Point:
    """One LiDAR return: ego-frame coordinates in meters plus intensity in [0, 1]."""

    x: float
    y: float
    z: float
    intensity: float = 0.0

    def __post_init__(self) -> None:
        for name in ("x", "y", "z", "intensity"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"non-finite {name} in Point")
        if not 0.0 <= self.intensity <= 1.0:
            raise ValueError(f"intensity {self.intensity} outside [0, 1]")

    def radius(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)


class PointCloud:
    """Unordered set of LiDAR returns stored as an (N, 4) float64 array.

    Columns are x, y, z, intensity. May be empty; point order carries no
    meaning (projection canonicalizes it).
    """

    __slots__ = ("data", "frame_id")

    def __init__(self, data: np.ndarray | None = None, frame_id: str = "") -> None:
        if data is None:
            data = np.empty((0, 4), dtype=np.float64)
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 2 or data.shape[1] != 4:
            raise ValueError(f"point cloud data must be (N, 4), got {data.shape}")
        data = np.ascontiguousarray(data)
        data.setflags(write=False)
        self.data = data
        self.frame_id = frame_id

    @classmethod
    def from_points(cls, points, frame_id: str = "") -> "PointCloud":
        rows = [(p.x, p.y, p.z, p.intensity) for p in points]
        return cls(np.array(rows, dtype=np.float64).reshape(-1, 4), frame_id)

    @property
    def xyz(self) -> np.ndarray:
        return self.data[:, :3]

    @property
    def intensity(self) -> np.ndarray:
        return self.data[:, 3]

    def point(self, i: int) -> Point:
        x, y, z, it = self.data[i]
        return Point(float(x), float(y), float(z), float(it))

    def __len__(self) -> int:
        return self.data.shape[0]

    def __repr__(self) -> str:
        return f"PointCloud(n={len(self)}, frame_id={self.frame_id!r})"


class RangeImage:
    """H x W range-view grid with two channels: range (meters) and intensity.

    Range NO_RETURN (0.0) marks pixels without a return; intensity is zero
    there. Arrays are float32 so on-disk tensors round-trip bit-exactly.
    """

    __slots__ = ("range_m", "intensity")

    def __init__(self, range_m: np.ndarray, intensity: np.ndarray) -> None:
        range_m = np.asarray(range_m, dtype=np.float32)
        intensity = np.asarray(intensity, dtype=np.float32)
        if range_m.ndim != 2 or range_m.shape != intensity.shape:
            raise ValueError("range and intensity must be equal-shaped 2-D grids")
        if range_m.shape[0] < 1 or range_m.shape[1] < 1:
            raise ValueError("range image needs H, W >= 1")
        if not np.all(np.isfinite(range_m)) or not np.all(np.isfinite(intensity)):
            raise ValueError("non-finite values in range image")
        if np.any(range_m < 0.0):
            raise ValueError("negative range values")
        if np.any(intensity[range_m == NO_RETURN] != 0.0):
            raise ValueError("intensity must be zero at no-return pixels")
        range_m = np.ascontiguousarray(range_m)
        intensity = np.ascontiguousarray(intensity)
        range_m.setflags(write=False)
        intensity.setflags(write=False)
        self.range_m = range_m
        self.intensity = intensity

    @classmethod
    def empty(cls, height: int, width: int) -> "RangeImage":
        z = np.zeros((height, width), dtype=np.float32)
        return cls(z, z.copy())

    @classmethod
    def from_grid(cls, grid: np.ndarray) -> "RangeImage":
        grid = np.asarray(grid)
        if grid.ndim != 3 or grid.shape[2] != 2:
            raise ValueError(f"expected (H, W, 2) grid, got {grid.shape}")
        return cls(grid[:, :, 0], grid[:, :, 1])

    def as_grid(self) -> np.ndarray:
        """Stack to (H, W, 2) float32, channel 0 range, channel 1 intensity."""
        return np.stack([self.range_m, self.intensity], axis=-1)

    @property
    def shape(self) -> tuple[int, int]:
        return self.range_m.shape

    @property
    def height(self) -> int:
        return self.range_m.shape[0]

    @property
    def width(self) -> int:
        return self.range_m.shape[1]

    def returns_mask(self) -> np.ndarray:
        return self.range_m != NO_RETURN

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RangeImage):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.range_m, other.range_m)
            and np.array_equal(self.intensity, other.intensity)
        )

    def __repr__(self) -> str:
        return f"RangeImage({self.height}x{self.width}, returns={int(self.returns_mask().sum())})"


class SemanticMask:
    """Binary H x W grid marking the edit region of a paired range image."""

    __slots__ = ("bits",)

    def __init__(self, bits: np.ndarray) -> None:
        bits = np.asarray(bits)
        if bits.ndim != 2:
            raise ValueError("mask must be 2-D")
        bits = np.ascontiguousarray(bits.astype(bool))
        bits.setflags(write=False)
        self.bits = bits

    @classmethod
    def zeros(cls, height: int, width: int) -> "SemanticMask":
        return cls(np.zeros((height, width), dtype=bool))

    @classmethod
    def from_pixels(cls, pixels, height: int, width: int) -> "SemanticMask":
        bits = np.zeros((height, width), dtype=bool)
        for r, c in pixels:
            bits[r, c] = True
        return cls(bits)

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    def count(self) -> int:
        return int(self.bits.sum())

    def pixels(self) -> np.ndarray:
        """Set pixels as an (N, 2) int array of (row, col), row-major order."""
        rows, cols = np.nonzero(self.bits)
        return np.stack([rows, cols], axis=1)

    def union(self, other: "SemanticMask") -> "SemanticMask":
        if self.shape != other.shape:
            raise ValueError("mask shape mismatch")
        return SemanticMask(self.bits | other.bits)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SemanticMask):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.bits, other.bits)

    def __repr__(self) -> str:
        return f"SemanticMask({self.height}x{self.width}, set={self.count()})"


def _wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.fmod(a, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    elif a > math.pi:
        a -= 2.0 * math.pi
    return a


@dataclass(frozen=True)
class OrientedBox:
    """Axis-ordered box placement: center, extents in meters, yaw about +z.

    length spans the local x axis, width_m the local y axis, height_m the
    local z axis. Yaw is normalized to (-pi, pi] on construction.
    """

    cx: float
    cy: float
    cz: float
    length: float
    width_m: float
    height_m: float
    yaw: float = 0.0

    def __post_init__(self) -> None:
        if not all(
            math.isfinite(v)
            for v in (self.cx, self.cy, self.cz, self.length, self.width_m, self.height_m, self.yaw)
        ):
            raise ValueError("non-finite OrientedBox field")
        if self.length <= 0 or self.width_m <= 0 or self.height_m <= 0:
            raise ValueError("box dimensions must be positive")
        object.__setattr__(self, "yaw", _wrap_angle(self.yaw))

    def center(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.cz], dtype=np.float64)

    def half_extents(self) -> np.ndarray:
        return np.array([self.length / 2.0, self.width_m / 2.0, self.height_m / 2.0])

    def to_local(self, points: np.ndarray) -> np.ndarray:
        """World (N, 3) points into the box frame (translate, then un-yaw)."""
        p = np.asarray(points, dtype=np.float64) - self.center()
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        local = np.empty_like(p)
        local[:, 0] = c * p[:, 0] + s * p[:, 1]
        local[:, 1] = -s * p[:, 0] + c * p[:, 1]
        local[:, 2] = p[:, 2]
        return local

    def to_world(self, local: np.ndarray) -> np.ndarray:
        local = np.asarray(local, dtype=np.float64)
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        world = np.empty_like(local)
        world[:, 0] = c * local[:, 0] - s * local[:, 1]
        world[:, 1] = s * local[:, 0] + c * local[:, 1]
        world[:, 2] = local[:, 2]
        return world + self.center()

    def contains(self, points: np.ndarray, margin: float = 0.0) -> np.ndarray:
        """Boolean mask of (N, 3) world points inside the box grown by margin."""
        local = self.to_local(np.atleast_2d(points))
        return np.all(np.abs(local) <= self.half_extents() + margin, axis=1)

    def corners(self) -> np.ndarray:
        h = self.half_extents()
        signs = np.array(
            [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=np.float64
        )
        return self.to_world(signs * h)
