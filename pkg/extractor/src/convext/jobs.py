"""Extraction jobs: resize, query cropping, and per-image file export."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from PIL import Image

from .formats import write_keypoint_file, write_tensor_file
from .keypoints import detect_keypoints
from .network import LAYER_INDEX, ActivationExtractor

logger = logging.getLogger(__name__)

MIN_MAX_DIM = 224


@dataclass(frozen=True)
class QueryCrop:
    image: str  # source image stem
    bbox: tuple[float, float, float, float]  # x1, y1, x2, y2 in pixels


@dataclass(frozen=True)
class ExtractionJob:
    images: tuple[Path, ...]
    layers: tuple[str, ...] = ("conv5_3",)
    max_dim: int = 1024
    keypoints: bool = True
    out_dir: Path = Path(".")
    # query id -> crop`; when set, the job emits one output per query id
    # cropped from the named source image before resizing
    query_crops: dict[str, QueryCrop] = field(default_factory=dict)

    def __post_init__(self) -> None:
        unknown = [l for l in self.layers if l not in LAYER_INDEX]
        if unknown:
            raise ValueError(f"unknown layer(s) {unknown}")
        if self.max_dim < MIN_MAX_DIM:
            raise ValueError(f"max dimension must be >= {MIN_MAX_DIM}, got {self.max_dim}")
        if not self.images and not self.query_crops:
            raise ValueError("nothing to extract")


def resize_to_max_dim(image: Image.Image, max_dim: int) -> Image.Image:
    """Scale so the longer side equals max_dim, preserving aspect ratio."""
    scale = max_dim / max(image.width, image.height)
    if scale == 1.0:
        return image
    new_w = max(1, round(image.width * scale))
    new_h = max(1, round(image.height * scale))
    return image.resize((new_w, new_h), Image.Resampling.BILINEAR)


def crop_to_bbox(image: Image.Image, bbox: tuple[float, float, float, float]) -> Image.Image:
    x1, y1, x2, y2 = bbox
    left = max(0, int(x1))
    top = max(0, int(y1))
    right = min(image.width, int(round(x2)))
    bottom = min(image.height, int(round(y2)))
    if right <= left or bottom <= top:
        raise ValueError(f"degenerate crop box {bbox}")
    return image.crop((left, top, right, bottom))


def _export_one(
    extractor: ActivationExtractor,
    job: ExtractionJob,
    name: str,
    image: Image.Image,
) -> list[Path]:
    resized = resize_to_max_dim(image, job.max_dim)
    written: list[Path] = []
    grids = extractor.activations(resized, list(job.layers))
    for layer in job.layers:
        path = job.out_dir / f"{name}.{layer}.cft"
        write_tensor_file(path, grids[layer])
        written.append(path)
    if job.keypoints:
        pts = detect_keypoints(resized)
        if pts.shape[0] == 0:
            logger.warning("no keypoints detected in %s", name)
        path = job.out_dir / f"{name}.kpt"
        write_keypoint_file(path, resized.width, resized.height, pts)
        written.append(path)
    return written


def run_job(job: ExtractionJob, extractor: ActivationExtractor) -> list[Path]:
    """Extract every image (and query crop) in the job; returns written paths."""
    job.out_dir.mkdir(parents=True, exist_ok=True)
    by_stem = {p.stem: p for p in job.images}
    written: list[Path] = []
    for path in job.images:
        with Image.open(path) as img:
            written += _export_one(extractor, job, path.stem, img)
    for query_id, crop in sorted(job.query_crops.items()):
        source = by_stem.get(crop.image)
        if source is None:
            raise FileNotFoundError(
                f"query {query_id!r} references image {crop.image!r} not in the job"
            )
        with Image.open(source) as img:
            cropped = crop_to_bbox(img, crop.bbox)
            written += _export_one(extractor, job, query_id, cropped)
    return written


def parse_query_crops(gt_dir: Path | str) -> dict[str, QueryCrop]:
    """Read Oxford-format *_query.txt files into a crop table."""
    gt_dir = Path(gt_dir)
    crops: dict[str, QueryCrop] = {}
    for qf in sorted(gt_dir.glob("*_query.txt")):
        tokens = qf.read_text(encoding="utf-8").split()
        if len(tokens) != 5:
            raise ValueError(f"malformed query line in {qf}")
        name = qf.name[: -len("_query.txt")]
        image = tokens[0].removeprefix("oxc1_")
        crops[name] = QueryCrop(image=image, bbox=tuple(float(t) for t in tokens[1:]))
    return crops
