"""Seeding plans for Gaussian mixture fitting.

Extends the k-means pass engine with two sampling metrics and one ranking
metric:

* ``A`` adaptive sampling: a mix of Mahalanobis distance to the mixture
  built from the current seeds and a uniform floor;
* ``G`` D^2 sampling over a distance between Gaussians estimated locally at
  every data point;
* ``L`` ranking candidates by the log-likelihood of the mixture built from
  the seeds.

Seeds are turned into an initial mixture with
:func:`~multipass_seeding.gmm.means_to_gmm` in spherical mode.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from ._rng import check_rng
from .dataset import CHUNK_SIZE, check_points, sq_dists
from .gmm import (
    LOG_2PI,
    Gauss,
    NotPositiveDefiniteError,
    is_pd,
    logsumexp,
    means_to_gmm,
    mixture_from_labels,
    mixture_loglik,
)
from .seeding import (
    NearestSeedCache,
    SeedingEngine,
    _labels_with,
    local_search_pp,
    multiswap_greedy,
    parse_plan,
)

__all__ = [
    "GMM_PRESETS",
    "LocalGaussSet",
    "adaptive_weights",
    "rank_by_loglik",
    "local_gaussians",
    "gauss_distance",
    "gauss_distances_to",
    "GmmSeedingEngine",
    "seed_gmm",
]

GMM_PRESETS = ("EON", "EGD", "EGD2", "EGD-EGC", "EGD-EGL", "AGL", "EGD-AGL", "GGD")


# --------------------------------------------------------------------------
# adaptive sampling


def _mahalanobis_min(mix, X):
    chol = mix.cholesky()
    best = np.full(X.shape[0], np.inf)
    for k in range(mix.n_components):
        z = linalg.solve_triangular(chol[k], (X - mix.means[k]).T, lower=True, check_finite=False)
        best = np.minimum(best, np.einsum("ij,ij->j", z, z))
    return best


def adaptive_weights(X, mix, alpha=0.5):
    """Sampling weights ``alpha * m(x) / sum(m) + (1 - alpha) / n``.

    ``m(x)`` is the smallest squared Mahalanobis distance from ``x`` to a
    component of ``mix``. The weights sum to one and are strictly positive
    whenever ``alpha < 1``. ``mix=None`` gives uniform weights.
    """
    X = check_points(X)
    n = X.shape[0]
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must lie in [0, 1]")
    if mix is None or alpha == 0:
        return np.full(n, 1.0 / n)
    m = _mahalanobis_min(mix, X)
    total = m.sum()
    if not total > 0:
        return np.full(n, 1.0 / n)
    return alpha * m / total + (1.0 - alpha) / n


def rank_by_loglik(X, base, candidates, mode="spherical"):
    """Candidate whose addition gives the most likely seed-induced mixture.

    For each candidate the seeds ``base + [c]`` go through
    :func:`means_to_gmm` and the result is scored by its log-likelihood.
    Ties go to the earliest candidate.
    """
    X = check_points(X)
    candidates = list(candidates)
    if not candidates:
        raise ValueError("no candidates to rank")
    base = list(base)
    scores = [
        mixture_loglik(means_to_gmm(X, X[base + [c]], mode), X) for c in candidates
    ]
    return candidates[int(np.argmax(scores))]


# --------------------------------------------------------------------------
# local Gaussians and the Gaussian distance


@dataclass
class LocalGaussSet:
    """One Gaussian per data point.

    Attributes
    ----------
    means : ndarray of shape (n, d)
    covs : ndarray of shape (n, d, d)
    source : ndarray of shape (n,)
        Index of the data point each Gaussian was estimated at.
    scale : ndarray of shape (n,)
        Mean distance to the nearest neighbors, the kernel width used.
    """

    means: np.ndarray
    covs: np.ndarray
    source: np.ndarray
    scale: np.ndarray = None

    def __len__(self):
        return self.means.shape[0]

    def __getitem__(self, j):
        return Gauss(self.means[j], self.covs[j])


def _neighbor_scale(X, L):
    n = X.shape[0]
    out = np.empty(n)
    step = max(1, CHUNK_SIZE * CHUNK_SIZE // max(n, 1))
    for start in range(0, n, step):
        stop = min(n, start + step)
        d2 = sq_dists(X[start:stop], X)
        d2[np.arange(stop - start), np.arange(start, stop)] = np.inf
        near = np.partition(d2, L - 1, axis=1)[:, :L]
        out[start:stop] = np.sqrt(near).mean(axis=1)
    return out


def _fallback_cov(cov):
    if is_pd(cov):
        return cov
    d = cov.shape[0]
    sph = np.trace(cov) / d * np.eye(d)
    if is_pd(sph):
        return sph
    return np.eye(d)


def local_gaussians(X, K):
    """Estimate a Gaussian around every data point.

    Each point ``j`` gets a kernel width ``s_j``, the mean distance to its
    ``L = n // K`` nearest neighbors (clamped to ``[1, n - 1]``). Point ``i``
    is shared among kernels in proportion to an isotropic normal density of
    standard deviation ``s_j`` centered at ``x_j``; the Gaussian at ``j`` is
    the responsibility-weighted mean and covariance of column ``j``.
    Covariances that fail Cholesky fall back to isotropic, then identity.
    """
    X = check_points(X)
    n, d = X.shape
    if not 1 <= K <= n:
        raise ValueError(f"need 1 <= K <= n, got K={K}, n={n}")
    if n == 1:
        return LocalGaussSet(X.copy(), np.eye(d)[None], np.arange(1), np.ones(1))
    L = int(min(max(n // K, 1), n - 1))
    scale = _neighbor_scale(X, L)
    # duplicated points give a zero width; borrow the smallest positive one
    pos = scale > 0
    scale = np.where(pos, scale, scale[pos].min() if pos.any() else 1.0)

    log_norm = -d * np.log(scale) - 0.5 * d * LOG_2PI
    inv_var = 1.0 / scale**2
    step = max(1, CHUNK_SIZE * CHUNK_SIZE // n)

    # pass 1: per-point normalizer over all kernels
    log_z = np.empty(n)
    for start in range(0, n, step):
        d2 = sq_dists(X[start:start + step], X)
        log_z[start:start + step] = logsumexp(log_norm - 0.5 * d2 * inv_var, axis=1)

    # pass 2: weighted moments of each kernel's responsibility column
    means = np.empty((n, d))
    covs = np.empty((n, d, d))
    col_step = max(1, (4 * CHUNK_SIZE * CHUNK_SIZE) // (n * d))
    for start in range(0, n, col_step):
        cols = np.arange(start, min(n, start + col_step))
        diff = X[:, None, :] - X[None, cols, :]  # (n, c, d), centered at x_j
        d2 = np.einsum("ick,ick->ic", diff, diff)
        resp = np.exp(log_norm[cols] - 0.5 * d2 * inv_var[cols] - log_z[:, None])
        mass = resp.sum(axis=0)
        shift = np.einsum("ic,ick->ck", resp, diff) / mass[:, None]
        second = np.einsum("ic,ick,icl->ckl", resp, diff, diff) / mass[:, None, None]
        cov = second - np.einsum("ck,cl->ckl", shift, shift)
        means[cols] = X[cols] + shift
        covs[cols] = 0.5 * (cov + np.swapaxes(cov, 1, 2))
    for j in range(n):
        covs[j] = _fallback_cov(covs[j])
    return LocalGaussSet(means, covs, np.arange(n), scale)


def _gep_log_sq(covs, chol):
    """Sum of squared logs of the generalized eigenvalues of ``(covs, chol chol^T)``.

    ``covs`` may be a single matrix or a stack.
    """
    inv = linalg.solve_triangular(chol, np.eye(chol.shape[0]), lower=True)
    m = inv @ covs @ inv.T
    lam = np.linalg.eigvalsh(0.5 * (m + np.swapaxes(m, -1, -2)))
    return np.sum(np.log(lam) ** 2, axis=-1)


def gauss_distance(g1, g2):
    """Distance between two Gaussians.

    ``sqrt(dmu^T S^-1 dmu) + sqrt(sum_k ln^2 lambda_k)`` with ``dmu`` the
    difference of means, ``S`` the average of the two covariances and
    ``lambda_k`` the generalized eigenvalues of the covariance pair,
    obtained by Cholesky reduction to a standard symmetric problem.
    """
    try:
        chol2 = linalg.cholesky(g2.cov, lower=True)
        linalg.cholesky(g1.cov, lower=True)
        cf = linalg.cho_factor(0.5 * (g1.cov + g2.cov), lower=True)
    except linalg.LinAlgError:
        raise NotPositiveDefiniteError("gauss_distance needs positive definite covariances") from None
    dmu = g1.mean - g2.mean
    mean_term = float(np.sqrt(max(dmu @ linalg.cho_solve(cf, dmu), 0.0)))
    return mean_term + float(np.sqrt(max(_gep_log_sq(g1.cov, chol2), 0.0)))


def gauss_distances_to(gs, j):
    """Distance from every Gaussian of ``gs`` to ``gs[j]``."""
    chol_j = np.linalg.cholesky(gs.covs[j])
    log_sq = _gep_log_sq(gs.covs, chol_j)
    avg = 0.5 * (gs.covs + gs.covs[j])
    dmu = gs.means - gs.means[j]
    sol = np.linalg.solve(avg, dmu[..., None])[..., 0]
    mean_term = np.sqrt(np.maximum(np.einsum("ij,ij->i", dmu, sol), 0.0))
    return mean_term + np.sqrt(np.maximum(log_sq, 0.0))


# --------------------------------------------------------------------------
# engine


class GmmSeedingEngine(SeedingEngine):
    """Seeding engine with adaptive, Gaussian-distance and likelihood metrics."""

    sampling_metrics = ("E", "A", "G")
    ranking_metrics = ("D", "C", "L", "N")

    def __init__(self, X, K, plan, rng, record=False, local_gauss=None):
        super().__init__(X, K, plan, rng, record=record)
        self.gcache = None
        if any(p.sampling == "G" for p in plan.passes):
            if local_gauss is None:
                local_gauss = local_gaussians(self.X, K)
            self.local_gauss = local_gauss
            self.gcache = NearestSeedCache(
                self.X, dist_fn=lambda i: gauss_distances_to(local_gauss, i) ** 2
            )
        self._mixture = None

    def _set_base(self, base):
        super()._set_base(base)
        self._mixture = None
        if self.gcache is not None:
            self.gcache.reset(base)

    def _add_to_base(self, i):
        super()._add_to_base(i)
        self._mixture = None
        if self.gcache is not None:
            self.gcache.add(i)

    def _current_mixture(self):
        # one spherical mixture per base set (rebuilt after every seed change)
        if self._mixture is None and self.cache.seeds:
            labels = self.cache.label
            self._mixture = mixture_from_labels(self.X, labels, len(self.cache.seeds))
        return self._mixture

    def _weights(self, spec):
        if spec.sampling == "G":
            return self.gcache.weights()
        if spec.sampling == "A":
            return adaptive_weights(self.X, self._current_mixture(), spec.alpha)
        return super()._weights(spec)

    def _score(self, spec, cand, pos):
        if spec.ranking == "L":
            labels = _labels_with(self.cache, self.cache.dist(cand), pos)
            mix = mixture_from_labels(self.X, labels, len(self.cache.seeds) + 1)
            return -mixture_loglik(mix, self.X)
        if spec.ranking == "D" and spec.sampling == "G":
            d = self.gcache.dist(cand)
            return float(np.sum(np.minimum(self.gcache.mind, d)))
        return super()._score(spec, cand, pos)


def seed_gmm(X, K, plan="EGD-EGC", random_state=None, pool_rule="log", alpha=0.5,
             local_gauss=None, mode="spherical"):
    """Seed points and the initial mixture built from them.

    Parameters
    ----------
    X : array-like of shape (n_samples, n_features)

    K : int

    plan : str or SeedingPlan, default="EGD-EGC"
        Preset name (see ``GMM_PRESETS``) or pass string such as
        ``"EGD-AGL"``.

    random_state : int, Generator or None

    pool_rule : str, default="log"

    alpha : float, default=0.5
        Mahalanobis share for adaptive sampling passes.

    local_gauss : LocalGaussSet, optional
        Precomputed local Gaussians for ``G`` sampling.

    mode : {"spherical", "aniso"}, default="spherical"
        Covariance estimate of the returned mixture.

    Returns
    -------
    seeds : ndarray of shape (K,)
    init : Mixture
    """
    X = check_points(X)
    if isinstance(plan, str):
        plan = parse_plan(plan, pool_rule, alpha)
    rng = check_rng(random_state)
    seeds = GmmSeedingEngine(X, K, plan, rng, local_gauss=local_gauss).run()
    if plan.refine == "lspp":
        seeds = local_search_pp(X, seeds, rng=rng, **plan.refine_params)
    elif plan.refine == "msg":
        seeds = multiswap_greedy(X, seeds, rng=rng, **plan.refine_params)
    return seeds, means_to_gmm(X, X[seeds], mode)
