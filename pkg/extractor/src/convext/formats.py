"""Standalone writers for the tensor and keypoint interchange formats.

These mirror the consumer's byte layout exactly (little-endian u32 counts,
f32 payloads) but are implemented independently, so a round-trip through
the consumer library is a genuine cross-implementation check.

  CFT1: magic, u32 W, u32 H, u32 K, then W*H*K f32 row-major over (y, x, k)
  KPT1: magic, u32 W_I, u32 H_I, u32 n, then n * (f32 x, f32 y)
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

TENSOR_MAGIC = b"CFT1"
KEYPOINT_MAGIC = b"KPT1"


def write_tensor_file(path: Path | str, activations: np.ndarray) -> int:
    """Write an (H, W, K) activation array as a CFT1 file."""
    arr = np.ascontiguousarray(activations, dtype="<f4")
    if arr.ndim != 3:
        raise ValueError(f"expected (H, W, K) activations, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("refusing to write non-finite activations")
    h, w, k = arr.shape
    payload = TENSOR_MAGIC + struct.pack("<III", w, h, k) + arr.tobytes(order="C")
    Path(path).write_bytes(payload)
    return len(payload)


def write_keypoint_file(path: Path | str, image_w: int, image_h: int, points: np.ndarray) -> int:
    """Write 1-based (x, y) pixel keypoints as a KPT1 file."""
    pts = np.ascontiguousarray(points, dtype="<f4").reshape(-1, 2)
    if pts.size and not np.isfinite(pts).all():
        raise ValueError("refusing to write non-finite keypoints")
    payload = (
        KEYPOINT_MAGIC
        + struct.pack("<III", image_w, image_h, pts.shape[0])
        + pts.tobytes(order="C")
    )
    Path(path).write_bytes(payload)
    return len(payload)


def read_tensor_file(path: Path | str) -> np.ndarray:
    """Minimal reader used by this package's own tests."""
    raw = Path(path).read_bytes()
    if raw[:4] != TENSOR_MAGIC:
        raise ValueError(f"bad magic {raw[:4]!r}")
    w, h, k = struct.unpack("<III", raw[4:16])
    flat = np.frombuffer(raw[16:], dtype="<f4", count=w * h * k)
    return flat.reshape(h, w, k)


def read_keypoint_file(path: Path | str) -> tuple[int, int, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:4] != KEYPOINT_MAGIC:
        raise ValueError(f"bad magic {raw[:4]!r}")
    w, h, n = struct.unpack("<III", raw[4:16])
    pts = np.frombuffer(raw[16:], dtype="<f4", count=2 * n).reshape(n, 2)
    return w, h, pts
