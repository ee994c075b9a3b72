"""Gaussian mixtures fitted by EM, evaluated in the log domain."""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .dataset import check_points, sq_dists

__all__ = [
    "NotPositiveDefiniteError",
    "DegenerateComponentError",
    "Gauss",
    "Mixture",
    "logsumexp",
    "log_pdf",
    "component_log_pdfs",
    "mixture_loglik",
    "e_step",
    "m_step",
    "em",
    "EMResult",
    "means_to_gmm",
    "mixture_from_labels",
    "is_pd",
]

LOG_2PI = np.log(2.0 * np.pi)
# relative diagonal load applied to every covariance during EM
EM_JITTER = 1e-9
# responsibility mass below which an EM component is considered dead
MIN_MASS = 1e-300


class NotPositiveDefiniteError(linalg.LinAlgError):
    """Cholesky factorization of a covariance failed."""


class DegenerateComponentError(ValueError):
    """A component received (numerically) zero responsibility mass."""

    def __init__(self, components):
        self.components = list(components)
        super().__init__(f"components {self.components} have vanishing mass")


@dataclass
class Gauss:
    """A single multivariate normal."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        self.cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
        d = self.mean.shape[0]
        if self.cov.shape != (d, d):
            raise ValueError(f"covariance shape {self.cov.shape} does not match dimension {d}")
        if not np.allclose(self.cov, self.cov.T, rtol=1e-10, atol=1e-14):
            raise ValueError("covariance must be symmetric")

    @property
    def d(self):
        return self.mean.shape[0]


@dataclass
class Mixture:
    """Weighted Gaussian components, stored as stacked arrays.

    Attributes
    ----------
    weights : ndarray of shape (K,)
    means : ndarray of shape (K, d)
    covs : ndarray of shape (K, d, d)
    """

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    _chol: np.ndarray = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        self.covs = np.asarray(self.covs, dtype=np.float64)
        K, d = self.means.shape
        if K < 1:
            raise ValueError("a mixture needs at least one component")
        if self.weights.shape != (K,) or self.covs.shape != (K, d, d):
            raise ValueError(
                f"inconsistent shapes: weights {self.weights.shape}, "
                f"means {self.means.shape}, covs {self.covs.shape}"
            )
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be non-negative and sum to 1")

    @property
    def n_components(self):
        return self.means.shape[0]

    @property
    def d(self):
        return self.means.shape[1]

    def component(self, k):
        return Gauss(self.means[k], self.covs[k])

    @classmethod
    def from_components(cls, weights, components):
        return cls(
            weights,
            np.stack([g.mean for g in components]),
            np.stack([g.cov for g in components]),
        )

    def cholesky(self):
        """Lower Cholesky factors of all covariances (cached)."""
        if self._chol is None:
            self._chol = np.stack([_cholesky(c) for c in self.covs])
        return self._chol

    def to_dict(self):
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": [c.reshape(-1).tolist() for c in self.covs],
        }

    @classmethod
    def from_dict(cls, data):
        means = np.asarray(data["means"], dtype=np.float64)
        K, d = means.shape
        covs = np.asarray(data["covariances"], dtype=np.float64).reshape(K, d, d)
        return cls(np.asarray(data["weights"]), means, covs)

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_json(cls, source):
        """Load from a JSON string or a path to a JSON file."""
        text = source
        if not str(source).lstrip().startswith("{"):
            with open(source) as fh:
                text = fh.read()
        return cls.from_dict(json.loads(text))


def _cholesky(cov):
    try:
        return linalg.cholesky(cov, lower=True, check_finite=False)
    except linalg.LinAlgError:
        raise NotPositiveDefiniteError("covariance is not positive definite") from None


def is_pd(cov):
    """Positive-definiteness test: does Cholesky succeed?"""
    try:
        L = linalg.cholesky(cov, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError):
        return False
    return bool(np.all(np.diag(L) > 0))


def logsumexp(v, axis=None):
    """``log(sum(exp(v)))`` shifted by the maximum; all ``-inf`` gives ``-inf``."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("logsumexp of an empty vector")
    vmax = np.max(v, axis=axis, keepdims=True)
    shift = np.where(np.isfinite(vmax), vmax, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(v - shift), axis=axis, keepdims=True)) + shift
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def _log_pdf_chol(X, mean, L):
    d = mean.shape[0]
    z = linalg.solve_triangular(L, (X - mean).T, lower=True, check_finite=False)
    maha = np.einsum("ij,ij->j", z, z)
    log_det = 2.0 * np.sum(np.log(np.diag(L)))
    return -0.5 * (d * LOG_2PI + log_det + maha)


def log_pdf(g, x):
    """Log-density of a Gaussian at one point or at each row of ``x``.

    Uses a Cholesky factor; raises :class:`NotPositiveDefiniteError` if the
    covariance is not positive definite.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x.reshape(1, -1) if single else x
    out = _log_pdf_chol(X, g.mean, _cholesky(g.cov))
    return float(out[0]) if single else out


def component_log_pdfs(mix, X):
    """``log w_k + log N(x_i | mu_k, Sigma_k)`` as an (n, K) matrix."""
    X = check_points(X)
    chol = mix.cholesky()
    out = np.empty((X.shape[0], mix.n_components))
    with np.errstate(divide="ignore"):
        logw = np.log(mix.weights)
    for k in range(mix.n_components):
        if mix.weights[k] == 0:
            out[:, k] = -np.inf
        else:
            out[:, k] = logw[k] + _log_pdf_chol(X, mix.means[k], chol[k])
    return out


def mixture_loglik(mix, X):
    """Total log-likelihood of the points under the mixture."""
    return float(np.sum(logsumexp(component_log_pdfs(mix, X), axis=1)))


def _e_step(mix, X):
    weighted = component_log_pdfs(mix, X)
    norm = logsumexp(weighted, axis=1)
    return weighted - norm[:, None], float(np.sum(norm))


def e_step(mix, X):
    """Log responsibilities, an (n, K) matrix whose rows logsumexp to 0."""
    return _e_step(mix, X)[0]


def m_step(X, log_resp):
    """Maximum-likelihood mixture given log responsibilities.

    Raises :class:`DegenerateComponentError` when a component's
    responsibility mass falls below ``1e-300``.
    """
    X = check_points(X)
    log_resp = np.asarray(log_resp, dtype=np.float64)
    n, K = log_resp.shape
    resp = np.exp(log_resp)
    mass = resp.sum(axis=0)
    dead = np.flatnonzero(mass < MIN_MASS)
    if dead.size:
        raise DegenerateComponentError(dead)
    # rescale so the weights sum to one regardless of row rounding
    weights = mass / mass.sum()
    means = (resp.T @ X) / mass[:, None]
    covs = np.empty((K, X.shape[1], X.shape[1]))
    for k in range(K):
        diff = X - means[k]
        cov = (resp[:, k, None] * diff).T @ diff / mass[k]
        covs[k] = 0.5 * (cov + cov.T)
    return Mixture(weights, means, covs)


def _spherical_cov(X, mean):
    d = X.shape[1]
    diff = X - mean
    return np.sum(diff * diff) / (d * X.shape[0]) * np.eye(d)


def _cluster_gauss(Xk, mode):
    """Mean and covariance of one cluster with the full -> spherical -> identity fallback."""
    d = Xk.shape[1]
    mu = Xk.mean(axis=0)
    if mode == "aniso":
        diff = Xk - mu
        cov = diff.T @ diff / Xk.shape[0]
        cov = 0.5 * (cov + cov.T)
        if is_pd(cov):
            return mu, cov
    cov = _spherical_cov(Xk, mu)
    if is_pd(cov):
        return mu, cov
    return mu, np.eye(d)


def mixture_from_labels(X, labels, K, mode="spherical"):
    """Moment-matched mixture of a hard partition.

    Empty clusters are dropped and the remaining weights renormalized.
    """
    if mode not in ("aniso", "spherical"):
        raise ValueError("mode must be 'aniso' or 'spherical'")
    counts = np.bincount(labels, minlength=K)
    ws, mus, covs = [], [], []
    for k in range(K):
        if counts[k] == 0:
            continue
        mu, cov = _cluster_gauss(X[labels == k], mode)
        ws.append(counts[k])
        mus.append(mu)
        covs.append(cov)
    ws = np.asarray(ws, dtype=np.float64)
    return Mixture(ws / ws.sum(), np.stack(mus), np.stack(covs))


def means_to_gmm(X, means, mode="spherical"):
    """Convert a set of means into an initial mixture.

    Points are partitioned by nearest mean (ties to the earlier mean). Each
    cluster yields a component at its center of mass, with weight equal to
    its share of the points, and a full (``"aniso"``) or isotropic
    (``"spherical"``) covariance; a covariance failing Cholesky falls back to
    the isotropic estimate and then to the identity.
    """
    X = check_points(X)
    means = np.atleast_2d(np.asarray(means, dtype=np.float64))
    if means.shape[0] < 1:
        raise ValueError("need at least one mean")
    labels = np.argmin(sq_dists(X, means), axis=1)
    return mixture_from_labels(X, labels, means.shape[0], mode)


# --------------------------------------------------------------------------
# EM


@dataclass
class EMResult:
    mixture: Mixture
    loglik: float
    iterations: int
    loglik_history: list
    repairs: int = 0


def _regularize(mix):
    d = mix.d
    covs = mix.covs.copy()
    for k in range(mix.n_components):
        load = EM_JITTER * np.trace(covs[k]) / d
        covs[k][np.diag_indices(d)] += load
    return Mixture(mix.weights, mix.means, covs)


def _repair(X, mix, bad):
    """Restart the listed components at the worst-explained points."""
    weights = mix.weights.copy()
    means = mix.means.copy()
    covs = mix.covs.copy()
    good = [k for k in range(mix.n_components) if k not in set(bad)]
    if good:
        w = weights[good] / weights[good].sum()
        ref = Mixture(w, means[good], covs[good])
        try:
            score = logsumexp(component_log_pdfs(ref, X), axis=1)
        except NotPositiveDefiniteError:
            score = np.zeros(X.shape[0])
    else:
        score = np.zeros(X.shape[0])
    score = score.copy()
    for k in bad:
        worst = int(np.argmin(score))
        means[k] = X[worst]
        score[worst] = np.inf
    labels = np.argmin(sq_dists(X, means), axis=1)
    for k in bad:
        members = X[labels == k]
        cov = _spherical_cov(members, means[k]) if len(members) else np.zeros_like(covs[k])
        covs[k] = cov if is_pd(cov) else np.eye(X.shape[1])
        weights[k] = 1.0 / mix.n_components
    return Mixture(weights / weights.sum(), means, covs)


def _safe_m_step(X, log_resp, prev):
    """M-step with diagonal loading and restart of collapsed components."""
    try:
        mix = m_step(X, log_resp)
        bad = []
    except DegenerateComponentError as exc:
        bad = exc.components
        resp = np.exp(log_resp)
        resp[:, bad] = 0.0
        # refit the healthy components, keep the dead ones as placeholders
        mass = resp.sum(axis=0)
        mass[bad] = 1.0
        means = (resp.T @ X) / mass[:, None]
        covs = prev.covs.copy()
        for k in range(resp.shape[1]):
            if k in bad:
                continue
            diff = X - means[k]
            cov = (resp[:, k, None] * diff).T @ diff / mass[k]
            covs[k] = 0.5 * (cov + cov.T)
        w = resp.sum(axis=0)
        w[bad] = 0.0
        if w.sum() <= 0:
            w = np.ones_like(w)
        mix = Mixture(w / w.sum(), means, covs)
    mix = _regularize(mix)
    for k in range(mix.n_components):
        if k not in bad and not is_pd(mix.covs[k]):
            bad.append(k)
    if bad:
        mix = _repair(X, mix, sorted(bad))
    return mix, len(bad)


def em(X, init, tol=1e-4, max_iter=100):
    """Expectation-Maximization from an initial mixture.

    Stops when ``|LL_t - LL_{t-1}| / |LL_{t-1}| < tol`` or after
    ``max_iter`` M-steps. Every M-step adds ``1e-9 * trace(Sigma) / d`` to
    each covariance diagonal; components whose mass vanishes or whose
    covariance is still not positive definite are restarted at the point
    with the lowest mixture density.

    Returns
    -------
    EMResult
        The mixture, its log-likelihood, the number of M-steps and the
        log-likelihood after each of them (index 0 is the initial mixture).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    X = check_points(X)
    mix = init
    log_resp, ll = _e_step(mix, X)
    history = [ll]
    repairs = 0
    it = 0
    for it in range(1, max_iter + 1):
        mix, fixed = _safe_m_step(X, log_resp, mix)
        repairs += fixed
        log_resp, ll_new = _e_step(mix, X)
        history.append(ll_new)
        done = abs(ll_new - ll) / abs(ll) < tol if ll != 0 else ll_new == ll
        ll = ll_new
        if done:
            break
    return EMResult(mix, ll, it, history, repairs)
