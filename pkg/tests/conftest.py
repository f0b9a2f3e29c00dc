"""Shared fixtures: random tensors and the synthetic clustered corpora."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from convagg.storage import FeatureTensor, KeypointList, save_keypoints, save_tensor


def random_tensor(rng: np.random.Generator, width: int, height: int, channels: int) -> FeatureTensor:
    data = rng.random((height, width, channels)).astype(np.float32)
    return FeatureTensor(width, height, channels, data)


def blob_tensor(
    rng: np.random.Generator,
    width: int,
    height: int,
    channels: int,
    blob_fraction: float = 0.25,
) -> tuple[FeatureTensor, np.ndarray]:
    """Salient-blob tensor: blob cells drawn with mean 5x the flat background.

    Returns the tensor and a boolean (H, W) map of blob membership. The
    background is U(0.5, 1.5) and the blob U(2.5, 7.5), so every per-channel
    argmax lands inside the blob.
    """
    bw = max(1, int(round(width * np.sqrt(blob_fraction))))
    bh = max(1, int(round(height * np.sqrt(blob_fraction))))
    x0 = rng.integers(0, width - bw + 1)
    y0 = rng.integers(0, height - bh + 1)
    data = rng.uniform(0.5, 1.5, size=(height, width, channels))
    data[y0 : y0 + bh, x0 : x0 + bw, :] = rng.uniform(2.5, 7.5, size=(bh, bw, channels))
    inside = np.zeros((height, width), dtype=bool)
    inside[y0 : y0 + bh, x0 : x0 + bw] = True
    return FeatureTensor(width, height, channels, data.astype(np.float32)), inside


def write_cluster_corpus(
    root: Path,
    n_classes: int = 3,
    per_class: int = 20,
    queries_per_class: int = 2,
    n_mixtures: int = 600,
    width: int = 8,
    height: int = 8,
    channels: int = 48,
    prototypes_per_class: int = 24,
    noise: float = 0.05,
    seed: int = 7,
    layer: str = "conv5_3",
) -> dict[str, Path]:
    """Clustered synthetic corpus: db/query tensors plus training mixtures.

    Each class owns a small set of non-negative prototype descriptors; a
    class image fills every cell with a randomly chosen class prototype,
    scaled and jittered, so masked descriptors cluster by class through
    their visual-word usage pattern (which survives eigen-direction
    dropping and whitening). Mixture images, used only for stage fitting,
    draw prototypes from all classes. Ground truth marks all same-class db
    images positive and one junk item per query, in the Oxford text layout.
    """
    rng = np.random.default_rng(seed)
    protos = np.abs(rng.standard_normal((n_classes * prototypes_per_class, channels)))
    protos /= np.linalg.norm(protos, axis=1, keepdims=True)
    protos = protos.reshape(n_classes, prototypes_per_class, channels)

    train = root / "train"
    db = root / "db"
    queries = root / "queries"
    gt = root / "gt"
    for d in (train, db, queries, gt):
        d.mkdir(parents=True, exist_ok=True)

    def cells_from(pool: np.ndarray) -> FeatureTensor:
        n_cells = height * width
        choice = rng.integers(0, pool.shape[0], size=n_cells)
        scale = rng.uniform(2.0, 5.0, size=(n_cells, 1))
        cells = pool[choice] * scale
        cells = cells + noise * rng.standard_normal((n_cells, channels))
        data = np.abs(cells).reshape(height, width, channels)
        return FeatureTensor(width, height, channels, data.astype(np.float32))

    def class_tensor(c: int) -> FeatureTensor:
        return cells_from(protos[c])

    def mixture_tensor() -> FeatureTensor:
        return cells_from(protos.reshape(-1, channels))

    db_names: dict[int, list[str]] = {c: [] for c in range(n_classes)}
    for c in range(n_classes):
        for i in range(per_class):
            name = f"cls{c}_{i:03d}"
            save_tensor(class_tensor(c), db / f"{name}.{layer}.cft")
            save_tensor(class_tensor(c), train / f"{name}.{layer}.cft")
            db_names[c].append(name)
    for i in range(n_mixtures):
        save_tensor(mixture_tensor(), train / f"mix_{i:04d}.{layer}.cft")

    for c in range(n_classes):
        for i in range(queries_per_class):
            qname = f"query{c}_{i}"
            save_tensor(class_tensor(c), queries / f"{qname}.{layer}.cft")
            positives = db_names[c]
            junk = [db_names[(c + 1) % n_classes][0]]
            (gt / f"{qname}_query.txt").write_text(f"{qname} 0 0 {width} {height}\n")
            (gt / f"{qname}_good.txt").write_text("\n".join(positives) + "\n")
            (gt / f"{qname}_ok.txt").write_text("")
            (gt / f"{qname}_junk.txt").write_text("\n".join(junk) + "\n")
    return {"train": train, "db": db, "queries": queries, "gt": gt}


@pytest.fixture(scope="session")
def cluster_corpus(tmp_path_factory: pytest.TempPathFactory) -> dict[str, Path]:
    """Full-size clustered corpus backing the end-to-end criteria."""
    root = tmp_path_factory.mktemp("cluster_corpus")
    return write_cluster_corpus(root)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory: pytest.TempPathFactory) -> dict[str, Path]:
    """Smaller clustered corpus for pipeline and determinism tests."""
    root = tmp_path_factory.mktemp("small_corpus")
    return write_cluster_corpus(
        root,
        per_class=8,
        queries_per_class=1,
        n_mixtures=120,
        width=8,
        height=8,
        channels=24,
        prototypes_per_class=10,
        seed=11,
    )


def make_keypoints(rng: np.random.Generator, image_w: int, image_h: int, count: int) -> KeypointList:
    xs = rng.uniform(1, image_w, size=count)
    ys = rng.uniform(1, image_h, size=count)
    return KeypointList(image_w, image_h, np.stack([xs, ys], axis=1).astype(np.float32))


def write_keypoints_for(corpus_dir: Path, rng: np.random.Generator, image_w: int = 640, image_h: int = 480, count: int = 40) -> None:
    for tensor_path in sorted(corpus_dir.glob("*.cft")):
        name = tensor_path.name.split(".")[0]
        kp_path = corpus_dir / f"{name}.kpt"
        if not kp_path.exists():
            save_keypoints(make_keypoints(rng, image_w, image_h, count), kp_path)
