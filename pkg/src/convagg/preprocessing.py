"""PCA compression of local descriptors, with optional row l2 normalization."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, DimensionMismatchError
from .linalg import eigh_descending, l2_normalize_rows

RANK_EPS = 1e-12  # relative eigenvalue cutoff for effective rank


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray  # (d_in,)
    basis: np.ndarray  # (d_in, d_out), orthonormal columns, eigenvalue-descending
    eigenvalues: np.ndarray  # (d_out,), non-negative, descending

    @property
    def input_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def output_dim(self) -> int:
        return self.basis.shape[1]


def fit_pca(train: np.ndarray, d_out: int) -> PcaModel:
    """Fit a rotation-only PCA (population covariance, 1/n scaling).

    Eigenvector signs follow the largest-magnitude-entry-positive convention
    so fitted models are bit-stable. If the training covariance has rank
    below d_out a warning is emitted and the trailing eigenvalues are zero.
    """
    x = np.asarray(train, dtype=np.float64)
    if x.ndim != 2:
        raise DataError("training descriptors must be an (n, d) matrix")
    n, d_in = x.shape
    if d_out < 1:
        raise ConfigError(f"d_out must be >= 1, got {d_out}")
    if d_out > d_in:
        raise ConfigError(f"d_out={d_out} exceeds input dimension {d_in}")
    if n <= d_out:
        raise DataError(f"need more than {d_out} training rows, got {n}")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / n
    values, vectors = eigh_descending(cov)
    if values[0] > 0:
        rank = int(np.count_nonzero(values > RANK_EPS * values[0]))
    else:
        rank = 0
    if rank < d_out:
        warnings.warn(
            f"training covariance rank {rank} below requested {d_out}; "
            "trailing eigenvalues zero-padded",
            RuntimeWarning,
            stacklevel=2,
        )
        values = values.copy()
        values[rank:] = 0.0
    return PcaModel(mean=mean, basis=vectors[:, :d_out], eigenvalues=values[:d_out])


def apply_pca(model: PcaModel, x: np.ndarray, l2: bool = True) -> np.ndarray:
    """Project rows of x onto the fitted basis; all-zero rows stay zero."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    rows = np.atleast_2d(x)
    if rows.shape[1] != model.input_dim:
        raise DimensionMismatchError(
            f"descriptor dim {rows.shape[1]} != model input dim {model.input_dim}"
        )
    projected = (rows - model.mean) @ model.basis
    if l2:
        projected = l2_normalize_rows(projected)
    return projected[0] if single else projected
