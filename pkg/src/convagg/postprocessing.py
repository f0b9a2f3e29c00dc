"""Power-law and rotation normalization of aggregated vectors.

Power-law normalization shrinks dominant components element-wise before
re-normalizing; rotation normalization decorrelates aggregate dimensions
with a PCA rotation, optionally whitened with a regularized eigenvalue
scaling, and can reduce dimension.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionMismatchError
from .linalg import l2_normalize_rows
from .preprocessing import fit_pca

RN_EPSILON = 1e-6  # relative to the largest eigenvalue


@dataclass(frozen=True)
class RnModel:
    mean: np.ndarray  # (D,)
    rotation: np.ndarray  # (D, D_out) orthonormal columns
    eigenvalues: np.ndarray  # (D_out,) descending
    whiten: bool = True
    epsilon: float = RN_EPSILON

    @property
    def input_dim(self) -> int:
        return self.rotation.shape[0]

    @property
    def output_dim(self) -> int:
        return self.rotation.shape[1]


def power_normalize(v: np.ndarray, alpha: float = 0.5) -> np.ndarray:
    """sign(x) * |x|**alpha element-wise, then l2 normalization.

    The zero vector stays zero. alpha=1 keeps the direction, alpha=0
    reduces to the normalized sign vector.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must be in [0, 1], got {alpha}")
    v = np.asarray(v, dtype=np.float64)
    single = v.ndim == 1
    rows = np.atleast_2d(v)
    powered = np.sign(rows) * np.abs(rows) ** alpha
    out = l2_normalize_rows(powered)
    return out[0] if single else out


def fit_rn(train: np.ndarray, d_out: int, whiten: bool = True, epsilon: float = RN_EPSILON) -> RnModel:
    """PCA rotation (optionally whitening) fitted on aggregated vectors."""
    pca = fit_pca(train, d_out)
    return RnModel(
        mean=pca.mean,
        rotation=pca.basis,
        eigenvalues=pca.eigenvalues,
        whiten=whiten,
        epsilon=epsilon,
    )


def apply_rn(model: RnModel, v: np.ndarray) -> np.ndarray:
    """Rotate (and whiten, if fitted so) then l2-normalize."""
    v = np.asarray(v, dtype=np.float64)
    single = v.ndim == 1
    rows = np.atleast_2d(v)
    if rows.shape[1] != model.input_dim:
        raise DimensionMismatchError(
            f"vector dim {rows.shape[1]} != rotation input dim {model.input_dim}"
        )
    projected = (rows - model.mean) @ model.rotation
    if model.whiten:
        top = model.eigenvalues[0] if model.eigenvalues.size else 0.0
        reg = model.epsilon * top if top > 0 else model.epsilon
        projected = projected / np.sqrt(model.eigenvalues + reg)
    out = l2_normalize_rows(projected)
    return out[0] if single else out
