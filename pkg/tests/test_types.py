"""Core type invariants."""
from __future__ import annotations

import math

import numpy as np
import pytest

from rangeforge import NO_RETURN, OrientedBox, Point, PointCloud, RangeImage, SemanticMask


def test_point_rejects_non_finite():
    with pytest.raises(ValueError):
        Point(math.nan, 0, 0)
    with pytest.raises(ValueError):
        Point(0, math.inf, 0)


def test_point_intensity_bounds():
    with pytest.raises(ValueError):
        Point(1, 2, 3, 1.5)
    assert Point(1, 2, 3, 1.0).intensity == 1.0


def test_cloud_empty_and_shape_checks():
    assert len(PointCloud()) == 0
    with pytest.raises(ValueError):
        PointCloud(np.zeros((3, 3)))


def test_cloud_immutable():
    cloud = PointCloud(np.zeros((2, 4)))
    with pytest.raises(ValueError):
        cloud.data[0, 0] = 1.0


def test_range_image_sentinel_invariant():
    r = np.zeros((2, 2), dtype=np.float32)
    i = np.zeros((2, 2), dtype=np.float32)
    i[0, 0] = 0.5  # intensity without a return
    with pytest.raises(ValueError):
        RangeImage(r, i)
    assert NO_RETURN == 0.0


def test_range_image_rejects_negative_and_non_finite():
    i = np.zeros((2, 2), dtype=np.float32)
    with pytest.raises(ValueError):
        RangeImage(np.full((2, 2), -1.0, np.float32), i)
    with pytest.raises(ValueError):
        RangeImage(np.full((2, 2), np.nan, np.float32), i)


def test_mask_pixels_round_trip():
    mask = SemanticMask.from_pixels([(0, 1), (3, 2)], 4, 4)
    assert mask.count() == 2
    assert SemanticMask.from_pixels(mask.pixels(), 4, 4) == mask


def test_box_yaw_normalized_and_dims_positive():
    box = OrientedBox(0, 0, 0, 4, 2, 1.5, yaw=3 * math.pi)
    assert -math.pi < box.yaw <= math.pi
    assert box.yaw == pytest.approx(math.pi)
    with pytest.raises(ValueError):
        OrientedBox(0, 0, 0, -4, 2, 1.5)


def test_box_contains_and_corners():
    box = OrientedBox(10, 0, 0, 4, 2, 2, yaw=math.pi / 2)
    # yaw 90deg: length now spans y
    assert box.contains(np.array([[10.0, 1.9, 0.0]]))[0]
    assert not box.contains(np.array([[11.9, 0.0, 0.0]]))[0]
    corners = box.corners()
    assert corners.shape == (8, 3)
    assert box.contains(corners, margin=1e-9).all()
