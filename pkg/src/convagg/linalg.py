"""Small shared numerics: deterministic eigendecomposition and row scaling."""

from __future__ import annotations

import numpy as np


def fix_eigenvector_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive.

    Makes eigenbases bit-stable across runs and platforms; ties in the
    magnitude argmax resolve to the first entry.
    """
    idx = np.abs(vectors).argmax(axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def eigh_descending(cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending, clamped at 0) and sign-fixed eigenvectors."""
    w, v = np.linalg.eigh(cov)
    order = np.argsort(-w, kind="stable")
    w = np.maximum(w[order], 0.0)
    v = fix_eigenvector_signs(v[:, order])
    return w, v


def l2_normalize_rows(rows: np.ndarray) -> np.ndarray:
    """Row-wise unit normalization; all-zero rows stay zero."""
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    safe = np.where(norms == 0, 1.0, norms)
    return rows / safe


def l2_normalize(vec: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(vec)
    return vec if norm == 0 else vec / norm
