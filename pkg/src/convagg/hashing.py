"""Iterative-quantization hashing of global descriptors into L-bit codes.

Training alternates a sign quantization step with an orthogonal Procrustes
rotation update on PCA-projected, centered descriptors; the quantization
loss is non-increasing across iterations. Encoding projects, rotates, and
takes bit i = 1 iff coordinate i >= 0 (sign(0) = +1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, DimensionMismatchError
from .linalg import eigh_descending
from .storage import pack_bits

ITQ_ITERATIONS = 50


@dataclass(frozen=True)
class ItqModel:
    mean: np.ndarray  # (D,)
    pca: np.ndarray  # (D, L) orthonormal columns
    rotation: np.ndarray  # (L, L) orthogonal
    losses: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def input_dim(self) -> int:
        return self.pca.shape[0]

    @property
    def bits(self) -> int:
        return self.pca.shape[1]


def _sign_pos(values: np.ndarray) -> np.ndarray:
    return np.where(values >= 0, 1.0, -1.0)


def fit_itq(
    train: np.ndarray,
    bits: int,
    iterations: int = ITQ_ITERATIONS,
    seed: int = 0,
    init_rotation: np.ndarray | None = None,
) -> ItqModel:
    """Alternating minimization of the binary quantization loss.

    The rotation starts from the QR factor of a seeded Gaussian matrix
    unless init_rotation is given. The recorded per-iteration losses
    ||B - V R||_F are monotone non-increasing.
    """
    x = np.asarray(train, dtype=np.float64)
    if x.ndim != 2:
        raise DataError("training descriptors must be an (n, D) matrix")
    n, dim = x.shape
    if bits < 1:
        raise ConfigError(f"bits must be >= 1, got {bits}")
    if bits > dim:
        raise ConfigError(f"bits={bits} exceeds descriptor dimension {dim}")
    if n <= bits:
        raise DataError(f"need more than {bits} training descriptors, got {n}")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / n
    _, vectors = eigh_descending(cov)
    pca = vectors[:, :bits]
    projected = centered @ pca
    if init_rotation is not None:
        rotation = np.asarray(init_rotation, dtype=np.float64)
        if rotation.shape != (bits, bits):
            raise ConfigError(f"init rotation must be ({bits}, {bits})")
    else:
        rng = np.random.default_rng(seed)
        rotation, _ = np.linalg.qr(rng.standard_normal((bits, bits)))
    losses = np.empty(iterations, dtype=np.float64)
    for it in range(iterations):
        rotated = projected @ rotation
        binary = _sign_pos(rotated)
        losses[it] = np.linalg.norm(binary - rotated)
        u, _, vt = np.linalg.svd(projected.T @ binary)
        rotation = u @ vt
    return ItqModel(mean=mean, pca=pca, rotation=rotation, losses=losses)


def itq_projection(model: ItqModel, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    rows = np.atleast_2d(v)
    if rows.shape[1] != model.input_dim:
        raise DimensionMismatchError(
            f"descriptor dim {rows.shape[1]} != hash input dim {model.input_dim}"
        )
    return (rows - model.mean) @ model.pca @ model.rotation


def encode_itq(model: ItqModel, v: np.ndarray) -> np.ndarray:
    """Packed uint64 code words, LSB-first; bit i set iff projection_i >= 0."""
    single = np.asarray(v).ndim == 1
    projected = itq_projection(model, v)
    bits = (projected >= 0).astype(np.uint8)
    packed = pack_bits(bits)
    return packed[0] if single else packed
