"""Bit-exact binary persistence for tensors, keypoints, descriptors and codes.

All formats are little-endian: counts are u32, floats are f32, packed code
words are u64. One object per file; readers validate magic, dimensions and
finiteness and raise distinct errors for each failure mode.

Layouts:
  CFT1  activation tensor   magic, W, H, K, then W*H*K f32
  KPT1  keypoint list       magic, W_I, H_I, n, then n * (f32 x, f32 y)
  GDF1  global descriptors  magic, n, D, then per item: u16 name len, name, D f32
  BCF1  binary codes        magic, n, L, then per item: u16 name len, name,
                            ceil(L/64) u64 words, bits packed LSB-first
  MAT1  matrix blob         magic, rows, cols, then rows*cols f32 row-major

Tensor data is row-major over (y, x, k): flat index ((y-1)*W + (x-1))*K + (k-1)
with 1-based grid coordinates, i.e. a C-ordered array of shape (H, W, K).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .errors import (
    BadMagicError,
    DataError,
    InvalidDimensionsError,
    NonFiniteValueError,
    TruncatedPayloadError,
)

TENSOR_MAGIC = b"CFT1"
KEYPOINT_MAGIC = b"KPT1"
DESCRIPTOR_MAGIC = b"GDF1"
CODE_MAGIC = b"BCF1"
MATRIX_MAGIC = b"MAT1"

_U32 = struct.Struct("<I")
_U16 = struct.Struct("<H")


@dataclass(frozen=True)
class FeatureTensor:
    """One image's W x H x K activation grid, data shaped (H, W, K) float32."""

    width: int
    height: int
    channels: int
    data: np.ndarray

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1 or self.channels < 1:
            raise InvalidDimensionsError(
                f"tensor dimensions must be >= 1, got "
                f"W={self.width} H={self.height} K={self.channels}"
            )
        expected = (self.height, self.width, self.channels)
        if self.data.shape != expected:
            raise InvalidDimensionsError(
                f"tensor data shape {self.data.shape} != {expected}"
            )
        if not np.isfinite(self.data).all():
            raise NonFiniteValueError("tensor contains non-finite activations")

    @staticmethod
    def from_flat(width: int, height: int, channels: int, flat: np.ndarray) -> "FeatureTensor":
        if width < 1 or height < 1 or channels < 1:
            raise InvalidDimensionsError(
                f"tensor dimensions must be >= 1, got W={width} H={height} K={channels}"
            )
        flat = np.asarray(flat, dtype=np.float32)
        if flat.size != width * height * channels:
            raise InvalidDimensionsError(
                f"expected {width * height * channels} values, got {flat.size}"
            )
        return FeatureTensor(width, height, channels, flat.reshape(height, width, channels))

    def descriptor_at(self, x: int, y: int) -> np.ndarray:
        """Channel vector at 1-based grid coordinate (x, y)."""
        return self.data[y - 1, x - 1, :]


@dataclass(frozen=True)
class KeypointList:
    """Detected keypoint centers in 1-based pixel coordinates."""

    image_width: int
    image_height: int
    points: np.ndarray  # (n, 2) float32, columns (x, y)

    def __post_init__(self) -> None:
        if self.image_width < 1 or self.image_height < 1:
            raise InvalidDimensionsError(
                f"image dimensions must be >= 1, got "
                f"{self.image_width} x {self.image_height}"
            )
        pts = self.points
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise InvalidDimensionsError(f"points must be (n, 2), got {pts.shape}")
        if pts.size:
            if not np.isfinite(pts).all():
                raise NonFiniteValueError("keypoints contain non-finite coordinates")
            x, y = pts[:, 0], pts[:, 1]
            if (x < 1).any() or (x > self.image_width).any() or (y < 1).any() or (y > self.image_height).any():
                raise DataError("keypoint outside image bounds")

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class GlobalDescriptorFile:
    """Named n x D matrix of real-valued global descriptors."""

    names: list[str]
    vectors: np.ndarray  # (n, D) float32

    def __post_init__(self) -> None:
        if self.vectors.ndim != 2:
            raise InvalidDimensionsError("descriptor matrix must be 2-D")
        if len(self.names) != self.vectors.shape[0]:
            raise InvalidDimensionsError("name count does not match row count")
        if self.vectors.size and not np.isfinite(self.vectors).all():
            raise NonFiniteValueError("descriptors contain non-finite values")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True)
class BinaryCodeFile:
    """Named L-bit codes packed LSB-first into u64 words."""

    names: list[str]
    bits: int
    codes: np.ndarray  # (n, ceil(bits/64)) uint64

    def __post_init__(self) -> None:
        if self.bits < 1:
            raise InvalidDimensionsError("code length must be >= 1")
        words = words_per_code(self.bits)
        if self.codes.ndim != 2 or self.codes.shape[1] != words:
            raise InvalidDimensionsError(
                f"codes must be (n, {words}) for L={self.bits}, got {self.codes.shape}"
            )
        if len(self.names) != self.codes.shape[0]:
            raise InvalidDimensionsError("name count does not match code count")
        pad = words * 64 - self.bits
        if pad and self.codes.size:
            high = self.codes[:, -1] >> np.uint64(64 - pad)
            if high.any():
                raise DataError("unused high bits of packed codes must be zero")


def words_per_code(bits: int) -> int:
    return (bits + 63) // 64


def pack_bits(rows: np.ndarray) -> np.ndarray:
    """Pack an (n, L) 0/1 array into (n, ceil(L/64)) u64 words, LSB first."""
    rows = np.asarray(rows, dtype=np.uint8)
    n, bits = rows.shape
    words = words_per_code(bits)
    packed = np.packbits(rows, axis=1, bitorder="little")
    padded = np.zeros((n, words * 8), dtype=np.uint8)
    padded[:, : packed.shape[1]] = packed
    return padded.view("<u8").reshape(n, words).astype(np.uint64)


def unpack_bits(codes: np.ndarray, bits: int) -> np.ndarray:
    """Inverse of pack_bits, returning an (n, bits) uint8 array."""
    codes = np.ascontiguousarray(codes, dtype="<u8")
    as_bytes = codes.view(np.uint8).reshape(codes.shape[0], -1)
    unpacked = np.unpackbits(as_bytes, axis=1, bitorder="little")
    return unpacked[:, :bits]


def _read_exact(source: BinaryIO, count: int, what: str) -> bytes:
    buf = source.read(count)
    if len(buf) != count:
        raise TruncatedPayloadError(
            f"truncated {what}: wanted {count} bytes, got {len(buf)}"
        )
    return buf


def _read_magic(source: BinaryIO, expected: bytes) -> None:
    magic = source.read(len(expected))
    if len(magic) != len(expected):
        raise TruncatedPayloadError("file shorter than magic")
    if magic != expected:
        raise BadMagicError(f"bad magic {magic!r}, expected {expected!r}")


def _read_u32(source: BinaryIO, what: str) -> int:
    return _U32.unpack(_read_exact(source, 4, what))[0]


def _read_floats(source: BinaryIO, count: int, what: str) -> np.ndarray:
    buf = _read_exact(source, count * 4, what)
    values = np.frombuffer(buf, dtype="<f4", count=count)
    if count and not np.isfinite(values).all():
        raise NonFiniteValueError(f"non-finite values in {what}")
    return values


def _f32_bytes(arr: np.ndarray, what: str) -> bytes:
    arr = np.asarray(arr, dtype="<f4")
    if arr.size and not np.isfinite(arr).all():
        raise NonFiniteValueError(f"refusing to write non-finite {what}")
    return arr.tobytes(order="C")


def write_tensor(tensor: FeatureTensor, sink: BinaryIO) -> int:
    payload = _f32_bytes(tensor.data, "tensor data")
    header = TENSOR_MAGIC + _U32.pack(tensor.width) + _U32.pack(tensor.height) + _U32.pack(tensor.channels)
    sink.write(header)
    sink.write(payload)
    return len(header) + len(payload)


def read_tensor(source: BinaryIO) -> FeatureTensor:
    _read_magic(source, TENSOR_MAGIC)
    width = _read_u32(source, "tensor header")
    height = _read_u32(source, "tensor header")
    channels = _read_u32(source, "tensor header")
    if width < 1 or height < 1 or channels < 1:
        raise InvalidDimensionsError(
            f"invalid tensor dimensions W={width} H={height} K={channels}"
        )
    flat = _read_floats(source, width * height * channels, "tensor data")
    return FeatureTensor(width, height, channels, flat.reshape(height, width, channels).copy())


def write_keypoints(kp: KeypointList, sink: BinaryIO) -> int:
    payload = _f32_bytes(kp.points, "keypoints")
    header = (
        KEYPOINT_MAGIC
        + _U32.pack(kp.image_width)
        + _U32.pack(kp.image_height)
        + _U32.pack(len(kp))
    )
    sink.write(header)
    sink.write(payload)
    return len(header) + len(payload)


def read_keypoints(source: BinaryIO) -> KeypointList:
    _read_magic(source, KEYPOINT_MAGIC)
    image_width = _read_u32(source, "keypoint header")
    image_height = _read_u32(source, "keypoint header")
    count = _read_u32(source, "keypoint header")
    pts = _read_floats(source, count * 2, "keypoint data").reshape(count, 2).copy()
    return KeypointList(image_width, image_height, pts)


def _write_name(sink: BinaryIO, name: str) -> int:
    encoded = name.encode("utf-8")
    if len(encoded) > 0xFFFF:
        raise DataError(f"item name too long ({len(encoded)} bytes)")
    sink.write(_U16.pack(len(encoded)))
    sink.write(encoded)
    return 2 + len(encoded)


def _read_name(source: BinaryIO) -> str:
    length = _U16.unpack(_read_exact(source, 2, "name length"))[0]
    return _read_exact(source, length, "item name").decode("utf-8")


def write_descriptors(gdf: GlobalDescriptorFile, sink: BinaryIO) -> int:
    total = len(DESCRIPTOR_MAGIC) + 8
    sink.write(DESCRIPTOR_MAGIC + _U32.pack(len(gdf.names)) + _U32.pack(gdf.dim))
    for name, row in zip(gdf.names, gdf.vectors):
        total += _write_name(sink, name)
        payload = _f32_bytes(row, "descriptor")
        sink.write(payload)
        total += len(payload)
    return total


def read_descriptors(source: BinaryIO) -> GlobalDescriptorFile:
    _read_magic(source, DESCRIPTOR_MAGIC)
    count = _read_u32(source, "descriptor header")
    dim = _read_u32(source, "descriptor header")
    names: list[str] = []
    rows = np.empty((count, dim), dtype=np.float32)
    for i in range(count):
        names.append(_read_name(source))
        rows[i] = _read_floats(source, dim, "descriptor data")
    return GlobalDescriptorFile(names, rows)


def write_codes(bcf: BinaryCodeFile, sink: BinaryIO) -> int:
    words = words_per_code(bcf.bits)
    total = len(CODE_MAGIC) + 8
    sink.write(CODE_MAGIC + _U32.pack(len(bcf.names)) + _U32.pack(bcf.bits))
    for name, row in zip(bcf.names, bcf.codes):
        total += _write_name(sink, name)
        payload = np.ascontiguousarray(row, dtype="<u8").tobytes()
        sink.write(payload)
        total += words * 8
    return total


def read_codes(source: BinaryIO) -> BinaryCodeFile:
    _read_magic(source, CODE_MAGIC)
    count = _read_u32(source, "code header")
    bits = _read_u32(source, "code header")
    if bits < 1:
        raise InvalidDimensionsError("code length must be >= 1")
    words = words_per_code(bits)
    names: list[str] = []
    codes = np.empty((count, words), dtype=np.uint64)
    for i in range(count):
        names.append(_read_name(source))
        buf = _read_exact(source, words * 8, "code words")
        codes[i] = np.frombuffer(buf, dtype="<u8", count=words)
    return BinaryCodeFile(names, bits, codes)


def write_matrix(arr: np.ndarray, sink: BinaryIO) -> int:
    arr = np.atleast_2d(np.asarray(arr))
    if arr.ndim != 2:
        raise InvalidDimensionsError("matrix blobs must be 2-D")
    payload = _f32_bytes(arr, "matrix data")
    sink.write(MATRIX_MAGIC + _U32.pack(arr.shape[0]) + _U32.pack(arr.shape[1]))
    sink.write(payload)
    return len(MATRIX_MAGIC) + 8 + len(payload)


def read_matrix(source: BinaryIO) -> np.ndarray:
    _read_magic(source, MATRIX_MAGIC)
    rows = _read_u32(source, "matrix header")
    cols = _read_u32(source, "matrix header")
    return _read_floats(source, rows * cols, "matrix data").reshape(rows, cols).copy()


def _with_open(path: Path | str, mode: str):
    return Path(path).open(mode)


def save_tensor(tensor: FeatureTensor, path: Path | str) -> int:
    with _with_open(path, "wb") as f:
        return write_tensor(tensor, f)


def load_tensor(path: Path | str) -> FeatureTensor:
    with _with_open(path, "rb") as f:
        return read_tensor(f)


def save_keypoints(kp: KeypointList, path: Path | str) -> int:
    with _with_open(path, "wb") as f:
        return write_keypoints(kp, f)


def load_keypoints(path: Path | str) -> KeypointList:
    with _with_open(path, "rb") as f:
        return read_keypoints(f)


def save_descriptors(gdf: GlobalDescriptorFile, path: Path | str) -> int:
    with _with_open(path, "wb") as f:
        return write_descriptors(gdf, f)


def load_descriptors(path: Path | str) -> GlobalDescriptorFile:
    with _with_open(path, "rb") as f:
        return read_descriptors(f)


def save_codes(bcf: BinaryCodeFile, path: Path | str) -> int:
    with _with_open(path, "wb") as f:
        return write_codes(bcf, f)


def load_codes(path: Path | str) -> BinaryCodeFile:
    with _with_open(path, "rb") as f:
        return read_codes(f)


def save_matrix(arr: np.ndarray, path: Path | str) -> int:
    with _with_open(path, "wb") as f:
        return write_matrix(arr, f)


def load_matrix(path: Path | str) -> np.ndarray:
    with _with_open(path, "rb") as f:
        return read_matrix(f)
