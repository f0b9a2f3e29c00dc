"""Codebook learning on preprocessed local descriptors.

fit_kmeans is a seeded k-means++ / Lloyd implementation with deterministic
tie-breaking; fit_gmm runs diagonal-covariance EM initialized from it. Both
carry their objective trajectory so callers can check monotonicity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DimensionMismatchError

KMEANS_MAX_ITER = 25
EM_MAX_ITER = 50
EM_TOL = 1e-6  # mean log-likelihood improvement
VARIANCE_FLOOR = 1e-4
DEGENERATE_WEIGHT = 1e-8


@dataclass(frozen=True)
class Codebook:
    centroids: np.ndarray  # (k, d)
    distortions: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def size(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


@dataclass(frozen=True)
class DiagonalGmm:
    weights: np.ndarray  # (k,), positive, sums to 1
    means: np.ndarray  # (k, d)
    variances: np.ndarray  # (k, d), >= VARIANCE_FLOOR
    log_likelihoods: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def size(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def _squared_distances(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # (n, k) matrix of ||x_i - c_j||^2; clamped at 0 against rounding.
    d2 = (
        np.sum(x * x, axis=1)[:, None]
        - 2.0 * x @ centroids.T
        + np.sum(centroids * centroids, axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def _plusplus_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]), dtype=np.float64)
    centroids[0] = x[rng.integers(n)]
    d2 = np.sum((x - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)
        centroids[j] = x[idx]
        d2 = np.minimum(d2, np.sum((x - centroids[j]) ** 2, axis=1))
    return centroids


def fit_kmeans(train: np.ndarray, k: int, seed: int = 0) -> Codebook:
    """k-means++ seeding followed by at most KMEANS_MAX_ITER Lloyd passes.

    Empty clusters are re-seeded with the point currently farthest from its
    own centroid, so every centroid stays populated. Deterministic for a
    fixed seed; assignment ties go to the lowest centroid index.
    """
    x = np.asarray(train, dtype=np.float64)
    if x.ndim != 2:
        raise DataError("training descriptors must be an (n, d) matrix")
    n = x.shape[0]
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    if n < k:
        raise DataError(f"k-means needs at least k={k} points, got {n}")
    rng = np.random.default_rng(seed)
    centroids = _plusplus_init(x, k, rng)
    assign = _squared_distances(x, centroids).argmin(axis=1)
    distortions: list[float] = []
    for _ in range(KMEANS_MAX_ITER):
        counts = np.bincount(assign, minlength=k)
        for j in np.nonzero(counts == 0)[0]:
            own = np.sum((x - centroids[assign]) ** 2, axis=1)
            farthest = int(own.argmax())
            assign[farthest] = j
            counts = np.bincount(assign, minlength=k)
        for j in range(k):
            centroids[j] = x[assign == j].mean(axis=0)
        d2 = _squared_distances(x, centroids)
        new_assign = d2.argmin(axis=1)
        distortions.append(float(d2[np.arange(n), new_assign].sum()))
        if (new_assign == assign).all():
            break
        assign = new_assign
    return Codebook(centroids=centroids, distortions=np.array(distortions))


def assign_nearest(codebook: Codebook, x: np.ndarray) -> np.ndarray | int:
    """Nearest-centroid index (0-based) per row; ties go to the lowest index."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    rows = np.atleast_2d(x)
    if rows.shape[1] != codebook.dim:
        raise DimensionMismatchError(
            f"descriptor dim {rows.shape[1]} != codebook dim {codebook.dim}"
        )
    idx = _squared_distances(rows, codebook.centroids).argmin(axis=1)
    return int(idx[0]) if single else idx


def _log_densities(gmm: DiagonalGmm, x: np.ndarray) -> np.ndarray:
    # (n, k) log w_j + log N(x | mu_j, diag sigma2_j)
    d = gmm.dim
    log_norm = -0.5 * (d * np.log(2.0 * np.pi) + np.sum(np.log(gmm.variances), axis=1))
    sq = (
        np.sum((x * x)[:, None, :] / gmm.variances[None, :, :], axis=2)
        - 2.0 * np.einsum("nd,kd->nk", x, gmm.means / gmm.variances)
        + np.sum(gmm.means * gmm.means / gmm.variances, axis=1)[None, :]
    )
    return np.log(gmm.weights)[None, :] + log_norm[None, :] - 0.5 * sq


def _logsumexp(rows: np.ndarray) -> np.ndarray:
    peak = rows.max(axis=1, keepdims=True)
    return (peak + np.log(np.exp(rows - peak).sum(axis=1, keepdims=True)))[:, 0]


def gmm_posteriors(gmm: DiagonalGmm, x: np.ndarray) -> np.ndarray:
    """Soft assignments; rows sum to 1."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    rows = np.atleast_2d(x)
    if rows.shape[1] != gmm.dim:
        raise DimensionMismatchError(
            f"descriptor dim {rows.shape[1]} != mixture dim {gmm.dim}"
        )
    log_joint = _log_densities(gmm, rows)
    post = np.exp(log_joint - _logsumexp(log_joint)[:, None])
    return post[0] if single else post


def _m_step(x: np.ndarray, post: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = x.shape[0]
    counts = post.sum(axis=0)
    weights = counts / n
    safe = np.where(counts == 0, 1.0, counts)
    means = (post.T @ x) / safe[:, None]
    second = (post.T @ (x * x)) / safe[:, None]
    variances = np.maximum(second - means * means, VARIANCE_FLOOR)
    return weights, means, variances


def fit_gmm(train: np.ndarray, k: int, seed: int = 0) -> DiagonalGmm:
    """Diagonal-covariance EM initialized from fit_kmeans.

    Runs at most EM_MAX_ITER iterations, stopping when the mean
    log-likelihood improves by less than EM_TOL. Variances are floored at
    VARIANCE_FLOOR per dimension. A component whose weight collapses below
    DEGENERATE_WEIGHT is re-seeded once at the worst-explained point; a
    second collapse is an error.
    """
    x = np.asarray(train, dtype=np.float64)
    if x.ndim != 2:
        raise DataError("training descriptors must be an (n, d) matrix")
    n = x.shape[0]
    if n < k:
        raise DataError(f"GMM needs at least k={k} points, got {n}")
    kmeans = fit_kmeans(x, k, seed)
    assign = assign_nearest(kmeans, x)
    weights = np.bincount(assign, minlength=k) / n
    means = kmeans.centroids.copy()
    variances = np.empty_like(means)
    for j in range(k):
        member = x[assign == j]
        variances[j] = np.maximum(member.var(axis=0), VARIANCE_FLOOR)
    gmm = DiagonalGmm(weights, means, variances)

    reseeded = False
    history: list[float] = []
    for _ in range(EM_MAX_ITER):
        log_joint = _log_densities(gmm, x)
        per_point = _logsumexp(log_joint)
        history.append(float(per_point.mean()))
        post = np.exp(log_joint - per_point[:, None])
        weights, means, variances = _m_step(x, post)
        if (weights < DEGENERATE_WEIGHT).any():
            bad = np.nonzero(weights < DEGENERATE_WEIGHT)[0]
            if reseeded:
                raise DataError(f"GMM component(s) {bad.tolist()} degenerate after re-seed")
            reseeded = True
            worst = int(per_point.argmin())
            global_var = np.maximum(x.var(axis=0), VARIANCE_FLOOR)
            for j in bad:
                means[j] = x[worst]
                variances[j] = global_var
                weights[j] = 1.0 / n
            weights = weights / weights.sum()
        gmm = DiagonalGmm(weights, means, variances)
        if len(history) >= 2 and history[-1] - history[-2] < EM_TOL:
            break
    return DiagonalGmm(gmm.weights, gmm.means, gmm.variances, np.array(history))
