"""Linear-scan retrieval and junk-aware mean-average-precision evaluation.

Real-valued indexes are scanned with cosine similarity, binary indexes with
per-word popcount Hamming distance. Ranking ties always break on the item
name so reported numbers are reproducible across runs and platforms.

Ground truth follows the Oxford buildings text layout: per query q the
files <q>_good.txt, <q>_ok.txt, <q>_junk.txt and <q>_query.txt, where good
and ok together form the positive set and junk items are deleted from a
ranking before average precision is computed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatchError, GroundTruthError
from .storage import BinaryCodeFile, GlobalDescriptorFile


@dataclass(frozen=True)
class QueryGroundTruth:
    positives: frozenset[str]
    junk: frozenset[str]
    query_image: str | None = None
    bbox: tuple[float, float, float, float] | None = None

    def __post_init__(self) -> None:
        if not self.positives:
            raise GroundTruthError("query has no positive items")
        overlap = self.positives & self.junk
        if overlap:
            raise GroundTruthError(f"items both positive and junk: {sorted(overlap)[:5]}")


@dataclass(frozen=True)
class GroundTruth:
    queries: dict[str, QueryGroundTruth] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.queries)


@dataclass(frozen=True)
class RankedList:
    query: str
    names: list[str]
    scores: np.ndarray


def _ranked(query: str, names: list[str], keys: np.ndarray, scores: np.ndarray, top_k: int | None) -> RankedList:
    name_arr = np.array(names)
    order = np.lexsort((name_arr, keys))
    if top_k is not None:
        order = order[:top_k]
    return RankedList(query=query, names=name_arr[order].tolist(), scores=scores[order])


def search_cosine(
    index: GlobalDescriptorFile,
    query_vector: np.ndarray,
    top_k: int | None = None,
    query: str = "query",
) -> RankedList:
    """Exact cosine scan, descending score, name tie-break."""
    q = np.asarray(query_vector, dtype=np.float64)
    if q.ndim != 1 or q.shape[0] != index.dim:
        raise DimensionMismatchError(f"query dim {q.shape} != index dim {index.dim}")
    qn = np.linalg.norm(q)
    rows = index.vectors.astype(np.float64)
    norms = np.linalg.norm(rows, axis=1)
    denom = norms * (qn if qn > 0 else 1.0)
    denom[denom == 0] = 1.0
    scores = rows @ q / denom
    return _ranked(query, index.names, -scores, scores, top_k)


def hamming_distances(codes: np.ndarray, query_code: np.ndarray) -> np.ndarray:
    """Per-row Hamming distance between packed u64 codes and one query code."""
    xor = np.bitwise_xor(codes, query_code[None, :])
    return np.bitwise_count(xor).sum(axis=1).astype(np.int64)


def search_hamming(
    index: BinaryCodeFile,
    query_code: np.ndarray,
    top_k: int | None = None,
    query: str = "query",
) -> RankedList:
    """Exact Hamming scan via per-word popcount, ascending distance."""
    q = np.asarray(query_code, dtype=np.uint64)
    if q.ndim != 1 or q.shape[0] != index.codes.shape[1]:
        raise DimensionMismatchError(
            f"query code has {q.shape} words, index has {index.codes.shape[1]}"
        )
    distances = hamming_distances(index.codes, q)
    return _ranked(query, index.names, distances, distances.astype(np.float64), top_k)


def average_precision(ranked: RankedList, gt: QueryGroundTruth) -> float:
    """Trapezoidal average precision with junk removed from the ranking.

    The precision-recall walk starts from precision 1 at recall 0, the
    classic Oxford buildings protocol.
    """
    positives = gt.positives
    if not positives:
        raise GroundTruthError("query has no positive items")
    ap = 0.0
    old_recall = 0.0
    old_precision = 1.0
    intersect = 0
    rank = 0
    for name in ranked.names:
        if name in gt.junk:
            continue
        rank += 1
        if name in positives:
            intersect += 1
        recall = intersect / len(positives)
        precision = intersect / rank
        ap += (recall - old_recall) * (precision + old_precision) / 2.0
        old_recall = recall
        old_precision = precision
    return ap


def mean_ap(lists: list[RankedList], gt: GroundTruth) -> float:
    """Unweighted mean of per-query average precision."""
    if not lists:
        raise GroundTruthError("no ranked lists to evaluate")
    total = 0.0
    for ranked in lists:
        if ranked.query not in gt.queries:
            raise GroundTruthError(f"query {ranked.query!r} missing from ground truth")
        total += average_precision(ranked, gt.queries[ranked.query])
    return total / len(lists)


def _read_names(path: Path) -> frozenset[str]:
    if not path.is_file():
        raise GroundTruthError(f"missing ground-truth file {path}")
    return frozenset(
        line.strip() for line in path.read_text(encoding="utf-8").splitlines() if line.strip()
    )


def parse_oxford_gt(gt_dir: Path | str) -> GroundTruth:
    """Parse an Oxford-format ground-truth directory.

    Every <q>_query.txt names the query image (a leading "oxc1_" corpus
    prefix is stripped) plus a region-of-interest bounding box used by the
    offline extractor when cropping query images.
    """
    gt_dir = Path(gt_dir)
    query_files = sorted(gt_dir.glob("*_query.txt"))
    if not query_files:
        raise GroundTruthError(f"no *_query.txt files under {gt_dir}")
    queries: dict[str, QueryGroundTruth] = {}
    for qf in query_files:
        name = qf.name[: -len("_query.txt")]
        tokens = qf.read_text(encoding="utf-8").split()
        if len(tokens) != 5:
            raise GroundTruthError(f"malformed query line in {qf}: {tokens}")
        image = tokens[0].removeprefix("oxc1_")
        try:
            bbox = tuple(float(t) for t in tokens[1:])
        except ValueError as exc:
            raise GroundTruthError(f"malformed bbox in {qf}") from exc
        good = _read_names(gt_dir / f"{name}_good.txt")
        ok = _read_names(gt_dir / f"{name}_ok.txt")
        junk = _read_names(gt_dir / f"{name}_junk.txt")
        queries[name] = QueryGroundTruth(
            positives=good | ok, junk=junk, query_image=image, bbox=bbox
        )
    return GroundTruth(queries=queries)
