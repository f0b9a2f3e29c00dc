"""Config-driven orchestration: fit every stage, encode corpora, evaluate.

Corpus layout on disk: one tensor file per image and layer named
<image>.<layer>.cft, plus an optional <image>.kpt keypoint file consumed by
the sift mask. Images are processed in sorted name order and all stage
fitting is seeded, so a fixed seed and fixed inputs reproduce byte-identical
model bundles, descriptor files, code files, and evaluation reports.
"""

from __future__ import annotations

import logging
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .aggregation import aggregate
from .codebooks import fit_gmm, fit_kmeans
from .config import PipelineConfig
from .embedding import (
    embed_fv,
    embed_temb,
    embed_temb_raw,
    embed_vlad,
    fit_temb_projection,
)
from .errors import DataError, DimensionMismatchError, EmptyMaskError
from .hashing import encode_itq, fit_itq
from .masking import apply_mask, compute_mask, full_mask, stack_hypercolumn
from .model import PipelineModel, save_model
from .postprocessing import apply_rn, fit_rn, power_normalize
from .preprocessing import apply_pca, fit_pca
from .retrieval import (
    GroundTruth,
    RankedList,
    average_precision,
    parse_oxford_gt,
    search_cosine,
    search_hamming,
)
from .storage import (
    BinaryCodeFile,
    FeatureTensor,
    GlobalDescriptorFile,
    KeypointList,
    load_keypoints,
    load_tensor,
)

logger = logging.getLogger(__name__)

TENSOR_SUFFIX = ".cft"
KEYPOINT_SUFFIX = ".kpt"


@dataclass(frozen=True)
class CorpusItem:
    name: str
    tensor_paths: tuple[Path, ...]
    keypoint_path: Path | None


def discover_corpus(tensor_dir: Path | str, layers: tuple[str, ...]) -> list[CorpusItem]:
    """Find images exposing every configured layer, sorted by name."""
    tensor_dir = Path(tensor_dir)
    primary = sorted(tensor_dir.glob(f"*.{layers[0]}{TENSOR_SUFFIX}"))
    items: list[CorpusItem] = []
    for path in primary:
        name = path.name[: -len(f".{layers[0]}{TENSOR_SUFFIX}")]
        tensor_paths = []
        for layer in layers:
            candidate = tensor_dir / f"{name}.{layer}{TENSOR_SUFFIX}"
            if not candidate.is_file():
                raise DataError(f"image {name!r} is missing layer tensor {candidate.name}")
            tensor_paths.append(candidate)
        kp = tensor_dir / f"{name}{KEYPOINT_SUFFIX}"
        items.append(CorpusItem(name, tuple(tensor_paths), kp if kp.is_file() else None))
    if not items:
        raise DataError(f"no *.{layers[0]}{TENSOR_SUFFIX} tensors under {tensor_dir}")
    return items


def _load_item(item: CorpusItem) -> tuple[list[FeatureTensor], KeypointList | None]:
    tensors = [load_tensor(p) for p in item.tensor_paths]
    keypoints = load_keypoints(item.keypoint_path) if item.keypoint_path else None
    return tensors, keypoints


def _masked_descriptors(
    cfg: PipelineConfig,
    name: str,
    tensor: FeatureTensor,
    keypoints: KeypointList | None,
) -> np.ndarray:
    if cfg.mask == "sift" and keypoints is None:
        raise DataError(f"image {name!r} has no keypoint file but mask=sift")
    try:
        mask = compute_mask(tensor, cfg.mask, keypoints)
    except EmptyMaskError:
        warnings.warn(
            f"image {name!r}: empty keypoint list, falling back to the full grid",
            RuntimeWarning,
            stacklevel=2,
        )
        mask = full_mask(tensor.width, tensor.height)
    return apply_mask(tensor, mask)


def _embed(model: PipelineModel, projected: np.ndarray) -> np.ndarray:
    kind = model.config.embed
    if kind == "temb":
        return embed_temb(model.temb, embed_temb_raw(model.codebook, projected))
    if kind == "vlad":
        return embed_vlad(model.codebook, projected)
    return embed_fv(model.gmm, projected)


def _aggregate_image(model: PipelineModel, embedded: np.ndarray) -> np.ndarray:
    # Degenerate rows (descriptor equal to its centroid, or equal to the
    # PCA mean) embed to zero and would violate the unit-norm requirement
    # of democratic weighting, so they are dropped before pooling.
    nonzero = np.linalg.norm(embedded, axis=1) > 0
    kept = embedded[nonzero]
    if kept.shape[0] == 0:
        warnings.warn("image embedded to all-zero rows", RuntimeWarning, stacklevel=2)
        return np.zeros(embedded.shape[1], dtype=np.float64)
    return aggregate(kept, model.config.agg)


def encode_image(
    model: PipelineModel,
    tensors: list[FeatureTensor] | FeatureTensor,
    keypoints: KeypointList | None = None,
    name: str = "image",
) -> tuple[np.ndarray, np.ndarray | None]:
    """Full deterministic encoding of one image.

    Returns the float32 global descriptor and, when the model carries a
    hash stage, the packed binary code.
    """
    cfg = model.config
    if isinstance(tensors, FeatureTensor):
        tensors = [tensors]
    if len(tensors) != len(cfg.layers):
        raise DataError(
            f"image {name!r}: got {len(tensors)} layer tensors, config wants {len(cfg.layers)}"
        )
    stacked = stack_hypercolumn(tensors)
    if stacked.channels != model.pca.input_dim:
        raise DimensionMismatchError(
            f"image {name!r}: stacked channels {stacked.channels} != model input {model.pca.input_dim}"
        )
    rows = _masked_descriptors(cfg, name, stacked, keypoints)
    projected = apply_pca(model.pca, rows, l2=True)
    embedded = _embed(model, projected)
    aggregated = _aggregate_image(model, embedded)
    normalized = power_normalize(aggregated, cfg.alpha)
    final = apply_rn(model.rn, normalized).astype(np.float32)
    code = encode_itq(model.itq, final) if model.itq is not None else None
    return final, code


def _subsample(rows: np.ndarray, cap: int, rng: np.random.Generator) -> np.ndarray:
    if rows.shape[0] <= cap:
        return rows
    idx = rng.choice(rows.shape[0], size=cap, replace=False)
    return rows[np.sort(idx)]


def fit_pipeline(train_dir: Path | str, cfg: PipelineConfig) -> PipelineModel:
    """Fit all stages on a training corpus, strictly in pipeline order."""
    cfg = cfg.validate()
    items = discover_corpus(train_dir, cfg.layers)
    rng = np.random.default_rng(cfg.seed)

    per_image: list[np.ndarray] = []
    for item in items:
        tensors, keypoints = _load_item(item)
        stacked = stack_hypercolumn(tensors)
        per_image.append(_masked_descriptors(cfg, item.name, stacked, keypoints))
    train_rows = _subsample(np.concatenate(per_image, axis=0), cfg.train_descriptor_cap, rng)
    logger.info("fitting PCA on %d descriptors", train_rows.shape[0])
    pca = fit_pca(train_rows, cfg.dim)
    projected = apply_pca(pca, train_rows, l2=True)

    codebook = None
    gmm = None
    if cfg.embed == "fv":
        gmm = fit_gmm(projected, cfg.codebook_size, cfg.seed)
    else:
        codebook = fit_kmeans(projected, cfg.codebook_size, cfg.seed)

    temb = None
    if cfg.embed == "temb":
        sample = _subsample(projected, cfg.projection_sample_cap, rng)
        raw = embed_temb_raw(codebook, sample)
        temb = fit_temb_projection(raw, cfg.drop)

    partial = PipelineModel(config=cfg, pca=pca, codebook=codebook, gmm=gmm, temb=temb)
    aggregates = np.empty((len(items), cfg.embedded_dim), dtype=np.float64)
    for i in range(len(items)):
        rows = apply_pca(pca, per_image[i], l2=True)
        embedded = _embed(partial, rows)
        aggregates[i] = power_normalize(_aggregate_image(partial, embedded), cfg.alpha)

    rn = fit_rn(aggregates, cfg.final_dim, whiten=cfg.rn_whiten)

    itq = None
    if cfg.hash_enabled:
        finals = apply_rn(rn, aggregates)
        itq = fit_itq(finals, cfg.bits, seed=cfg.seed)

    model = PipelineModel(
        config=cfg, pca=pca, codebook=codebook, gmm=gmm, temb=temb, rn=rn, itq=itq
    )
    return model.canonicalize()


def fit_and_save(train_dir: Path | str, cfg: PipelineConfig, bundle_dir: Path | str) -> Path:
    model = fit_pipeline(train_dir, cfg)
    return save_model(model, bundle_dir)


def encode_corpus(
    model: PipelineModel,
    tensor_dir: Path | str,
    workers: int = 1,
) -> tuple[GlobalDescriptorFile, BinaryCodeFile | None]:
    """Encode every image under tensor_dir, in sorted name order."""
    items = discover_corpus(tensor_dir, model.config.layers)

    def encode_one(item: CorpusItem) -> tuple[np.ndarray, np.ndarray | None]:
        tensors, keypoints = _load_item(item)
        return encode_image(model, tensors, keypoints, name=item.name)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(encode_one, items))
    else:
        results = [encode_one(item) for item in items]

    names = [item.name for item in items]
    vectors = np.stack([vec for vec, _ in results]).astype(np.float32)
    descriptors = GlobalDescriptorFile(names, vectors)
    codes = None
    if model.itq is not None:
        packed = np.stack([code for _, code in results])
        codes = BinaryCodeFile(names, model.itq.bits, packed)
    return descriptors, codes


def rehash_descriptors(model: PipelineModel, descriptors: GlobalDescriptorFile) -> BinaryCodeFile:
    """Build a binary index from an existing real-valued descriptor file."""
    if model.itq is None:
        raise DataError("model has no hash stage; fit with hashing enabled")
    packed = encode_itq(model.itq, descriptors.vectors)
    return BinaryCodeFile(descriptors.names, model.itq.bits, packed)


@dataclass(frozen=True)
class EvalReport:
    per_query: list[tuple[str, float]]
    mean: float
    timings: dict[str, float]

    def tsv(self) -> str:
        lines = [f"{name}\t{ap:.6f}" for name, ap in self.per_query]
        lines.append(f"mAP\t{self.mean:.6f}")
        return "\n".join(lines) + "\n"


def run_eval(
    model: PipelineModel,
    db_dir: Path | str,
    query_dir: Path | str,
    gt: GroundTruth | Path | str,
    mode: str = "real",
    workers: int = 1,
) -> EvalReport:
    """Encode both corpora, search, and compute junk-aware mAP."""
    if mode not in ("real", "binary"):
        raise DataError(f"unknown evaluation mode {mode!r}")
    if mode == "binary" and model.itq is None:
        raise DataError("binary evaluation requires a model with a hash stage")
    if not isinstance(gt, GroundTruth):
        gt = parse_oxford_gt(gt)

    timings: dict[str, float] = {}
    tic = time.perf_counter()
    db_desc, db_codes = encode_corpus(model, db_dir, workers)
    timings["encode_db"] = time.perf_counter() - tic

    tic = time.perf_counter()
    q_desc, q_codes = encode_corpus(model, query_dir, workers)
    timings["encode_queries"] = time.perf_counter() - tic

    tic = time.perf_counter()
    lists: list[RankedList] = []
    if mode == "real":
        for name, vec in zip(q_desc.names, q_desc.vectors):
            lists.append(search_cosine(db_desc, vec, query=name))
    else:
        for name, code in zip(q_codes.names, q_codes.codes):
            lists.append(search_hamming(db_codes, code, query=name))
    timings["search"] = time.perf_counter() - tic

    tic = time.perf_counter()
    per_query = []
    for ranked in lists:
        if ranked.query not in gt.queries:
            raise DataError(f"query {ranked.query!r} missing from ground truth")
        per_query.append((ranked.query, average_precision(ranked, gt.queries[ranked.query])))
    value = sum(ap for _, ap in per_query) / len(per_query)
    timings["evaluate"] = time.perf_counter() - tic

    return EvalReport(per_query=per_query, mean=value, timings=timings)
