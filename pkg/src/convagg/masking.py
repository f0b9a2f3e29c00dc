"""Selection masks over activation tensors.

A mask is an ordered, duplicate-free set of 1-based grid coordinates (x, y)
selecting which local features of a W x H x K tensor survive to embedding.
Three schemes are provided: keypoint-projected (sift), cross-channel sum
thresholded at the median (sum), and per-channel argmax locations (max).
Coordinate lists are always row-major sorted so downstream artifacts hash
stably.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, DimensionMismatchError, EmptyMaskError, InvalidDimensionsError
from .storage import FeatureTensor, KeypointList

MASK_KINDS = ("none", "sift", "sum", "max")


@dataclass(frozen=True)
class SelectionMask:
    width: int
    height: int
    coords: np.ndarray  # (n, 2) int64, columns (x, y), 1-based, row-major sorted

    def __post_init__(self) -> None:
        c = self.coords
        if c.ndim != 2 or c.shape[1] != 2:
            raise InvalidDimensionsError(f"mask coords must be (n, 2), got {c.shape}")
        if c.size:
            x, y = c[:, 0], c[:, 1]
            if (x < 1).any() or (x > self.width).any() or (y < 1).any() or (y > self.height).any():
                raise DataError("mask coordinate outside grid")
            flat = (y - 1) * self.width + (x - 1)
            if np.unique(flat).size != flat.size:
                raise DataError("mask contains duplicate coordinates")

    def __len__(self) -> int:
        return self.coords.shape[0]


def _sorted_mask(width: int, height: int, xs: np.ndarray, ys: np.ndarray) -> SelectionMask:
    flat = np.unique((ys.astype(np.int64) - 1) * width + (xs.astype(np.int64) - 1))
    out = np.empty((flat.size, 2), dtype=np.int64)
    out[:, 0] = flat % width + 1
    out[:, 1] = flat // width + 1
    return SelectionMask(width, height, out)


def full_mask(width: int, height: int) -> SelectionMask:
    """All W*H locations in row-major order."""
    ys, xs = np.divmod(np.arange(width * height, dtype=np.int64), width)
    return SelectionMask(width, height, np.stack([xs + 1, ys + 1], axis=1))


def _round_half_away(v: np.ndarray) -> np.ndarray:
    return np.sign(v) * np.floor(np.abs(v) + 0.5)


def compute_sift_mask(tensor: FeatureTensor, keypoints: KeypointList) -> SelectionMask:
    """Project keypoint pixel locations onto the activation grid.

    Each keypoint (x, y) maps to (round(x*W/W_I), round(y*H/H_I)) with halves
    rounded away from zero, clamped into the grid; duplicates collapse.
    Raises EmptyMaskError when no keypoints are given so callers can fall
    back to the unmasked tensor.
    """
    if len(keypoints) == 0:
        raise EmptyMaskError("keypoint list is empty")
    pts = keypoints.points.astype(np.float64)
    xs = _round_half_away(pts[:, 0] * tensor.width / keypoints.image_width)
    ys = _round_half_away(pts[:, 1] * tensor.height / keypoints.image_height)
    xs = np.clip(xs, 1, tensor.width).astype(np.int64)
    ys = np.clip(ys, 1, tensor.height).astype(np.int64)
    return _sorted_mask(tensor.width, tensor.height, xs, ys)


def compute_max_mask(tensor: FeatureTensor) -> SelectionMask:
    """One location per channel: the argmax of that feature map.

    Ties break to the smallest row-major index, so the result is
    deterministic across platforms.
    """
    maps = tensor.data.reshape(tensor.height * tensor.width, tensor.channels)
    flat = maps.argmax(axis=0)
    xs = flat % tensor.width + 1
    ys = flat // tensor.width + 1
    return _sorted_mask(tensor.width, tensor.height, xs, ys)


def compute_sum_mask(tensor: FeatureTensor) -> SelectionMask:
    """Locations whose cross-channel activation sum reaches the median.

    The threshold is the lower median (ceil(m/2)-th smallest of the m = W*H
    sums) and the comparison is >=, so all-distinct sums retain exactly
    floor(m/2)+1 locations and ties at the median are all kept.
    """
    sums = tensor.data.sum(axis=2, dtype=np.float64).reshape(-1)
    m = sums.size
    alpha = np.partition(sums, (m + 1) // 2 - 1)[(m + 1) // 2 - 1]
    keep = np.nonzero(sums >= alpha)[0]
    xs = keep % tensor.width + 1
    ys = keep // tensor.width + 1
    return _sorted_mask(tensor.width, tensor.height, xs, ys)


def compute_mask(tensor: FeatureTensor, kind: str, keypoints: KeypointList | None = None) -> SelectionMask:
    if kind == "none":
        return full_mask(tensor.width, tensor.height)
    if kind == "sift":
        if keypoints is None:
            raise DataError("sift mask requires a keypoint list")
        return compute_sift_mask(tensor, keypoints)
    if kind == "sum":
        return compute_sum_mask(tensor)
    if kind == "max":
        return compute_max_mask(tensor)
    raise DataError(f"unknown mask kind {kind!r}")


def apply_mask(tensor: FeatureTensor, mask: SelectionMask | None) -> np.ndarray:
    """Gather the K-dim local descriptors retained by the mask.

    Returns an (n, K) float32 matrix in mask order; a None mask returns all
    W*H descriptors in row-major order.
    """
    if mask is None:
        return tensor.data.reshape(-1, tensor.channels).copy()
    if mask.width != tensor.width or mask.height != tensor.height:
        raise DimensionMismatchError(
            f"mask grid {mask.width}x{mask.height} != tensor {tensor.width}x{tensor.height}"
        )
    flat = (mask.coords[:, 1] - 1) * tensor.width + (mask.coords[:, 0] - 1)
    return tensor.data.reshape(-1, tensor.channels)[flat].copy()


def stack_hypercolumn(tensors: Sequence[FeatureTensor]) -> FeatureTensor:
    """Concatenate same-resolution tensors along the channel axis."""
    if not tensors:
        raise DataError("need at least one tensor to stack")
    first = tensors[0]
    if len(tensors) == 1:
        return first
    for t in tensors[1:]:
        if t.width != first.width or t.height != first.height:
            raise DimensionMismatchError(
                f"spatial shape mismatch: {t.width}x{t.height} vs {first.width}x{first.height}"
            )
    data = np.concatenate([t.data for t in tensors], axis=2)
    return FeatureTensor(first.width, first.height, data.shape[2], data)


def dump_mask(mask: SelectionMask, path: Path | str) -> None:
    """Text dump, one "x y" line per coordinate under a "# W H" header."""
    with Path(path).open("w", encoding="utf-8") as f:
        f.write(f"# {mask.width} {mask.height}\n")
        for x, y in mask.coords:
            f.write(f"{x} {y}\n")


def load_mask_dump(path: Path | str) -> SelectionMask:
    with Path(path).open("r", encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 3 or header[0] != "#":
            raise DataError("mask dump must start with a '# W H' header")
        width, height = int(header[1]), int(header[2])
        coords = [tuple(map(int, line.split())) for line in f if line.strip()]
    arr = np.array(coords, dtype=np.int64).reshape(len(coords), 2)
    return SelectionMask(width, height, arr)


def _unit_rows(rows: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return rows / norms


def correlation_concentration(
    descriptors: np.ndarray,
    band: float = 0.15,
    pair_cap: int = 100_000,
    rng: np.random.Generator | None = None,
) -> float:
    """Fraction of pairwise dot products of unit-normalized rows in [-band, band].

    Pairs are subsampled to pair_cap with the supplied generator when the
    full pair count would exceed it.
    """
    n = descriptors.shape[0]
    if n < 2:
        return 0.0
    unit = _unit_rows(descriptors.astype(np.float64))
    total_pairs = n * (n - 1) // 2
    if total_pairs <= pair_cap:
        gram = unit @ unit.T
        iu = np.triu_indices(n, k=1)
        dots = gram[iu]
    else:
        rng = rng or np.random.default_rng(0)
        i = rng.integers(0, n, size=pair_cap)
        j = rng.integers(0, n - 1, size=pair_cap)
        j = np.where(j >= i, j + 1, j)  # avoid self pairs
        dots = np.einsum("ij,ij->i", unit[i], unit[j])
    return float(np.mean(np.abs(dots) <= band))


def mask_stats(
    corpus: Iterable[tuple[FeatureTensor, KeypointList | None]],
    kind: str,
    band: float = 0.15,
    pair_cap: int = 100_000,
    seed: int = 0,
) -> tuple[float, float]:
    """Corpus-level mask statistics.

    Returns (mean retained fraction, mean correlation concentration), where
    the second number is the average fraction of pairwise dot products of
    unit-normalized retained descriptors that fall in [-band, band].
    """
    fractions: list[float] = []
    concentrations: list[float] = []
    rng = np.random.default_rng(seed)
    for tensor, keypoints in corpus:
        try:
            mask = compute_mask(tensor, kind, keypoints)
        except EmptyMaskError:
            mask = full_mask(tensor.width, tensor.height)
        fractions.append(len(mask) / (tensor.width * tensor.height))
        retained = apply_mask(tensor, mask)
        concentrations.append(correlation_concentration(retained, band, pair_cap, rng))
    if not fractions:
        raise DataError("mask_stats needs a non-empty corpus")
    return float(np.mean(fractions)), float(np.mean(concentrations))
