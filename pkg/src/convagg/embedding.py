"""Per-descriptor embeddings into a high-dimensional space.

Three families are supported, all emitting unit-norm rows:

  triangulation (temb): concatenated unit residuals to every centroid,
      then centering and removal of the top-e eigen-directions,
  vlad: residual to the nearest centroid in its codebook block,
  fv: Fisher vector mean/variance gradient blocks of a diagonal GMM.

Output dimensionalities are d*|C| - e, d*|C| and 2*d*|C| respectively.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .codebooks import Codebook, DiagonalGmm, assign_nearest, gmm_posteriors
from .errors import ConfigError, DataError, DimensionMismatchError
from .linalg import eigh_descending, l2_normalize_rows

logger = logging.getLogger(__name__)

EMBED_KINDS = ("temb", "vlad", "fv")

_CHUNK = 1024  # residual tensor rows processed per block


@dataclass(frozen=True)
class TembProjection:
    """Centering + eigen-direction removal applied to raw embeddings.

    keep_basis holds the eigenvectors that remain after dropping the top
    drop_count directions (descending eigenvalue order); outputs are
    expressed in those coordinates, so the embedded dimension is
    raw_dim - drop_count.
    """

    mean: np.ndarray  # (raw_dim,)
    drop_basis: np.ndarray  # (raw_dim, e) orthonormal columns
    keep_basis: np.ndarray  # (raw_dim, raw_dim - e) orthonormal columns

    @property
    def raw_dim(self) -> int:
        return self.keep_basis.shape[0]

    @property
    def drop_count(self) -> int:
        return self.drop_basis.shape[1]

    @property
    def output_dim(self) -> int:
        return self.keep_basis.shape[1]


def _as_rows(x: np.ndarray, dim: int, what: str) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    rows = np.atleast_2d(x)
    if rows.shape[1] != dim:
        raise DimensionMismatchError(f"{what}: descriptor dim {rows.shape[1]} != {dim}")
    return rows, single


def embed_temb_raw(codebook: Codebook, x: np.ndarray) -> np.ndarray:
    """Concatenated unit residuals (x - c_j)/||x - c_j|| over all centroids.

    A descriptor that coincides with a centroid contributes a zero block
    there (logged, not an error).
    """
    rows, single = _as_rows(x, codebook.dim, "triangulation embedding")
    n, d = rows.shape
    k = codebook.size
    out = np.empty((n, k * d), dtype=np.float64)
    for start in range(0, n, _CHUNK):
        block = rows[start : start + _CHUNK]
        residuals = block[:, None, :] - codebook.centroids[None, :, :]
        norms = np.linalg.norm(residuals, axis=2, keepdims=True)
        degenerate = norms[:, :, 0] == 0
        if degenerate.any():
            logger.info(
                "%d descriptor/centroid coincidences embedded as zero blocks",
                int(degenerate.sum()),
            )
        np.divide(residuals, norms, out=residuals, where=norms > 0)
        residuals[degenerate] = 0.0
        out[start : start + _CHUNK] = residuals.reshape(block.shape[0], k * d)
    return out[0] if single else out


def fit_temb_projection(raw_train: np.ndarray, drop_count: int) -> TembProjection:
    """Fit centering and eigen-direction removal on raw embeddings.

    The training rows are put into a canonical order first, so the fitted
    projection is bit-identical under any permutation of the training set.
    """
    x = np.asarray(raw_train, dtype=np.float64)
    if x.ndim != 2:
        raise DataError("raw embeddings must be an (n, D) matrix")
    n, raw_dim = x.shape
    if drop_count < 0 or drop_count >= raw_dim:
        raise ConfigError(f"drop count {drop_count} must be in [0, {raw_dim})")
    if n <= drop_count:
        raise DataError(f"need more than {drop_count} training embeddings, got {n}")
    x = x[np.lexsort(x.T)]
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / n
    _, vectors = eigh_descending(cov)
    return TembProjection(
        mean=mean,
        drop_basis=vectors[:, :drop_count],
        keep_basis=vectors[:, drop_count:],
    )


def embed_temb(proj: TembProjection, raw: np.ndarray) -> np.ndarray:
    """Center, drop the top eigen-directions, l2-normalize.

    Rows that project to zero stay zero.
    """
    rows, single = _as_rows(raw, proj.raw_dim, "triangulation projection")
    out = l2_normalize_rows((rows - proj.mean) @ proj.keep_basis)
    return out[0] if single else out


def embed_vlad(codebook: Codebook, x: np.ndarray) -> np.ndarray:
    """Nearest-centroid residual in its codebook block, unit-normalized."""
    rows, single = _as_rows(x, codebook.dim, "vlad embedding")
    n, d = rows.shape
    nearest = np.atleast_1d(assign_nearest(codebook, rows))
    out = np.zeros((n, codebook.size * d), dtype=np.float64)
    residual = rows - codebook.centroids[nearest]
    cols = nearest[:, None] * d + np.arange(d)[None, :]
    np.put_along_axis(out, cols, residual, axis=1)
    out = l2_normalize_rows(out)
    return out[0] if single else out


def embed_fv(gmm: DiagonalGmm, x: np.ndarray) -> np.ndarray:
    """Fisher vector blocks [mean gradients | variance gradients], unit norm."""
    rows, single = _as_rows(x, gmm.dim, "fisher embedding")
    n, d = rows.shape
    k = gmm.size
    post = np.atleast_2d(gmm_posteriors(gmm, rows))
    sigma = np.sqrt(gmm.variances)
    z = (rows[:, None, :] - gmm.means[None, :, :]) / sigma[None, :, :]  # (n, k, d)
    mean_blocks = post[:, :, None] * z / np.sqrt(gmm.weights)[None, :, None]
    var_blocks = post[:, :, None] * (z * z - 1.0) / np.sqrt(2.0 * gmm.weights)[None, :, None]
    out = np.concatenate(
        [mean_blocks.reshape(n, k * d), var_blocks.reshape(n, k * d)], axis=1
    )
    out = l2_normalize_rows(out)
    return out[0] if single else out


def embedding_dim(kind: str, d: int, codebook_size: int, drop_count: int = 0) -> int:
    """Final per-descriptor embedding dimensionality for a configuration."""
    if kind == "temb":
        dim = d * codebook_size - drop_count
        if dim < 1:
            raise ConfigError(
                f"temb output dim d*|C|-e = {d}*{codebook_size}-{drop_count} must be positive"
            )
        return dim
    if kind == "vlad":
        return d * codebook_size
    if kind == "fv":
        return 2 * d * codebook_size
    raise ConfigError(f"unknown embedding kind {kind!r}")
