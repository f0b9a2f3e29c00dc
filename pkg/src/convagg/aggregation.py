"""Collapse a set of embedded descriptors into a single vector.

Democratic pooling scales each row so that every descriptor contributes
equally to its similarity with the aggregate; the weights come from a
Sinkhorn-style iteration on the (optionally clamped) Gram matrix. All
reductions here accumulate in a canonical (sorted) order so the aggregate
is bit-identical under any permutation of the input rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

AGG_MODES = ("sum", "avg", "max", "democratic")

UNIT_ROW_TOL = 1e-5
SIGMA_SKIP = 1e-12


@dataclass(frozen=True)
class AggregationConfig:
    mode: str = "democratic"
    sinkhorn_iterations: int = 10
    sinkhorn_exponent: float = 0.5
    clamp_negative_gram: bool = True

    def __post_init__(self) -> None:
        if self.mode not in AGG_MODES:
            raise ConfigError(f"unknown aggregation mode {self.mode!r}")
        if self.sinkhorn_iterations < 1:
            raise ConfigError("sinkhorn_iterations must be >= 1")
        if not 0.0 < self.sinkhorn_exponent <= 1.0:
            raise ConfigError("sinkhorn_exponent must be in (0, 1]")


def _canonical_colsum(rows: np.ndarray) -> np.ndarray:
    # Sorting each column before reduction makes the sum independent of row
    # order, which keeps aggregates bit-identical under input permutation.
    return np.sort(rows, axis=0).sum(axis=0)


def aggregate_pool(rows: np.ndarray, mode: str) -> np.ndarray:
    """Column-wise sum, average, or max of the descriptor rows."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise DataError("pooling needs a non-empty (n, D) matrix")
    if mode == "sum":
        return _canonical_colsum(rows)
    if mode == "avg":
        return _canonical_colsum(rows) / rows.shape[0]
    if mode == "max":
        return rows.max(axis=0)
    raise ConfigError(f"unknown pooling mode {mode!r}")


def democratic_weights(rows: np.ndarray, cfg: AggregationConfig | None = None) -> np.ndarray:
    """Per-row positive weights balancing each row's Gram row sum.

    Rows must be unit-norm within UNIT_ROW_TOL. Each pass computes
    sigma_i = lambda_i * sum_j K_ij * lambda_j on the clamped Gram matrix
    and divides lambda_i by sigma_i ** exponent, skipping near-zero sigmas.
    """
    cfg = cfg or AggregationConfig()
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise DataError("democratic weighting needs a non-empty (n, D) matrix")
    norms = np.linalg.norm(rows, axis=1)
    if np.abs(norms - 1.0).max() > UNIT_ROW_TOL:
        worst = float(np.abs(norms - 1.0).max())
        raise DataError(
            f"democratic weighting requires unit-norm rows (worst deviation {worst:.3g})"
        )
    n = rows.shape[0]
    if n == 1:
        return np.ones(1, dtype=np.float64)
    # The whole iteration runs on a canonical (lexicographically sorted) row
    # order and the weights are mapped back afterwards; this is what makes
    # the output bit-identical under input permutation.
    order = np.lexsort(rows.T)
    canonical = rows[order]
    lam = np.ones(n, dtype=np.float64)
    gram = canonical @ canonical.T
    if cfg.clamp_negative_gram:
        np.maximum(gram, 0.0, out=gram)
    for _ in range(cfg.sinkhorn_iterations):
        sigma = lam * (gram @ lam)
        active = sigma >= SIGMA_SKIP
        lam[active] = lam[active] / sigma[active] ** cfg.sinkhorn_exponent
    out = np.empty(n, dtype=np.float64)
    out[order] = lam
    return out


def aggregate_democratic(rows: np.ndarray, cfg: AggregationConfig | None = None) -> np.ndarray:
    """Weighted sum of rows under democratic weights."""
    lam = democratic_weights(rows, cfg)
    rows = np.asarray(rows, dtype=np.float64)
    return _canonical_colsum(lam[:, None] * rows)


def aggregate(rows: np.ndarray, cfg: AggregationConfig) -> np.ndarray:
    if cfg.mode == "democratic":
        return aggregate_democratic(rows, cfg)
    return aggregate_pool(rows, cfg.mode)
