"""Binary tensor container used to exchange grids between pipeline stages.

Layout (little-endian throughout):

    bytes 0..5   magic "RVIMG1"
    bytes 6..17  H, W, C as three uint32
    bytes 18..   H*W*C float32 payload, row-major with channel fastest

The format is deliberately minimal so identical inputs produce byte-identical
files on every platform; goldens are compared bit-exactly.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"RVIMG1"
HEADER_SIZE = len(MAGIC) + 12
PAYLOAD_OFFSET = HEADER_SIZE

# Guard against absurd headers before allocating payload buffers.
_MAX_ELEMENTS = 1 << 31


class TensorFileError(ValueError):
    """Malformed tensor file or invalid tensor payload."""


def tensor_bytes(data: np.ndarray) -> bytes:
    """Encode an (H, W, C) float grid to the on-disk byte layout."""
    arr = np.asarray(data)
    if arr.ndim != 3:
        raise TensorFileError(f"expected a 3-D grid, got shape {arr.shape}")
    h, w, c = arr.shape
    if h < 1 or w < 1 or c < 1:
        raise TensorFileError(f"degenerate dims {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise TensorFileError("non-finite values in tensor payload")
    payload = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    return MAGIC + struct.pack("<III", h, w, c) + payload


def write_tensor(path: str | Path, data: np.ndarray) -> None:
    """Write data (H, W, C) to path in the TensorFile layout."""
    Path(path).write_bytes(tensor_bytes(data))


def tensor_from_bytes(raw: bytes) -> np.ndarray:
    """Decode bytes in the on-disk layout to an (H, W, C) float32 array."""
    if len(raw) < HEADER_SIZE:
        raise TensorFileError("file shorter than header")
    if raw[: len(MAGIC)] != MAGIC:
        raise TensorFileError(f"bad magic {raw[:len(MAGIC)]!r}")
    h, w, c = struct.unpack("<III", raw[len(MAGIC) : HEADER_SIZE])
    if h < 1 or w < 1 or c < 1:
        raise TensorFileError(f"degenerate dims ({h}, {w}, {c})")
    n = h * w * c
    if n > _MAX_ELEMENTS:
        raise TensorFileError(f"dims ({h}, {w}, {c}) overflow sanity bound")
    expected = HEADER_SIZE + 4 * n
    if len(raw) != expected:
        raise TensorFileError(f"payload length {len(raw) - HEADER_SIZE}, expected {4 * n}")
    flat = np.frombuffer(raw, dtype="<f4", offset=HEADER_SIZE)
    return flat.reshape(h, w, c).copy()


def read_tensor(path: str | Path) -> np.ndarray:
    """Exact inverse of write_tensor."""
    return tensor_from_bytes(Path(path).read_bytes())
