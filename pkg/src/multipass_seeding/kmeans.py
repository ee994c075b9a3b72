"""SSE functionals, nearest-center assignment and Lloyd iterations."""

from dataclasses import dataclass, field

import numpy as np

from .dataset import DataError, check_points, sq_dists

__all__ = [
    "LloydResult",
    "assign",
    "centroids",
    "sse",
    "sse_com",
    "partition_cost",
    "lloyd",
]


@dataclass
class LloydResult:
    """Outcome of a Lloyd run.

    ``sse_history[t]`` is the SSE of the centers after ``t`` updates, so
    ``sse_history[0]`` is the cost of the initial centers.
    """

    centers: np.ndarray
    labels: np.ndarray
    sse: float
    iterations: int
    sse_history: list = field(default_factory=list)


def _check_centers(X, C):
    C = np.atleast_2d(np.asarray(C, dtype=np.float64))
    if C.shape[1] != X.shape[1]:
        raise DataError(
            f"centers have dimension {C.shape[1]}, points have {X.shape[1]}"
        )
    if C.shape[0] < 1:
        raise DataError("at least one center is required")
    return C


def _nearest(X, C):
    d2 = sq_dists(X, C)
    # argmin returns the first minimum: ties go to the smaller center index
    labels = np.argmin(d2, axis=1)
    return labels, d2[np.arange(X.shape[0]), labels]


def assign(X, C):
    """Label of the nearest center for every point.

    Ties go to the smaller center index.
    """
    X = check_points(X)
    C = _check_centers(X, C)
    return _nearest(X, C)[0]


def _cluster_sums(X, labels, K):
    # bincount accumulates in index order, which keeps the result independent
    # of any threading in the caller
    counts = np.bincount(labels, minlength=K).astype(np.float64)
    sums = np.empty((K, X.shape[1]))
    for j in range(X.shape[1]):
        sums[:, j] = np.bincount(labels, weights=X[:, j], minlength=K)
    return sums, counts


def centroids(X, labels, K):
    """Per-cluster means, repairing empty clusters.

    An empty cluster receives the point currently farthest from its own
    centroid; that point is then treated as a centroid too, so several empty
    clusters receive distinct points.

    Returns
    -------
    C : ndarray of shape (K, n_features)
    empty : ndarray of int
        Indices of the clusters that were repaired.
    """
    X = check_points(X)
    labels = np.asarray(labels, dtype=np.intp)
    if labels.shape != (X.shape[0],):
        raise DataError("labels must have one entry per point")
    if labels.size and (labels.min() < 0 or labels.max() >= K):
        raise DataError(f"labels must lie in [0, {K})")
    sums, counts = _cluster_sums(X, labels, K)
    C = np.zeros((K, X.shape[1]))
    full = counts > 0
    C[full] = sums[full] / counts[full, None]
    empty = np.flatnonzero(~full)
    if empty.size:
        diff = X - C[labels]
        cost = np.einsum("ij,ij->i", diff, diff)
        for k in empty:
            far = int(np.argmax(cost))
            C[k] = X[far]
            cost[far] = -1.0
    return C, empty


def sse(X, C):
    """Sum over points of the squared distance to the nearest center."""
    X = check_points(X)
    C = _check_centers(X, C)
    # np.sum uses pairwise summation on contiguous input
    return float(np.sum(_nearest(X, C)[1]))


def partition_cost(X, labels, K):
    """SSE of every point to the centroid of its own cluster.

    Unlike :func:`sse`, points are not reassigned to the nearest centroid.
    """
    sums, counts = _cluster_sums(X, labels, K)
    nz = counts > 0
    sums[nz] /= counts[nz, None]
    diff = X - sums[labels]
    return float(np.sum(np.einsum("ij,ij->i", diff, diff)))


def sse_com(X, seeds):
    """SSE against the centroids of the partition induced by seed points.

    Each point is charged its squared distance to the center of mass of the
    points sharing its nearest seed (ties go to the earlier seed).

    Parameters
    ----------
    X : array-like of shape (n_samples, n_features)

    seeds : sequence of int
        Indices of the seed points.
    """
    X = check_points(X)
    seeds = np.asarray(seeds, dtype=np.intp)
    if seeds.size == 0:
        raise ValueError("seed set must not be empty")
    labels = _nearest(X, X[seeds])[0]
    return partition_cost(X, labels, len(seeds))


def lloyd(X, init, tol=1e-4, max_iter=50):
    """Lloyd iterations from the given initial centers.

    Stops once the Frobenius norm of the change in centers drops below
    ``tol`` (unnormalized) or after ``max_iter`` center updates.

    Parameters
    ----------
    X : array-like of shape (n_samples, n_features)

    init : array-like of shape (n_clusters, n_features)

    tol : float, default=1e-4

    max_iter : int, default=50

    Returns
    -------
    LloydResult
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    X = check_points(X)
    C = _check_centers(X, init).copy()
    K = C.shape[0]

    labels, d2 = _nearest(X, C)
    history = [float(np.sum(d2))]
    it = 0
    for it in range(1, max_iter + 1):
        C_new, _ = centroids(X, labels, K)
        shift = np.linalg.norm(C_new - C)
        C = C_new
        labels, d2 = _nearest(X, C)
        history.append(float(np.sum(d2)))
        if shift < tol:
            break
    return LloydResult(C, labels, history[-1], it, history)
