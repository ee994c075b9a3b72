"""scikit-learn compatible estimators wrapping the seeders, Lloyd and EM."""

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, DensityMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._rng import check_rng
from .datagen import sample_dataset
from .gmm import component_log_pdfs, e_step, em, logsumexp
from .gmm_seeding import seed_gmm
from .kmeans import assign, lloyd, sse
from .seeding import parse_plan, seed


def _validate(X, reset_from=None):
    X = check_array(X, dtype=np.float64, ensure_min_samples=1)
    if reset_from is not None and X.shape[1] != reset_from:
        raise ValueError(
            f"X has {X.shape[1]} features, but the estimator was fitted with {reset_from}"
        )
    return X


class MultipassKMeans(ClusterMixin, TransformerMixin, BaseEstimator):
    """k-means with multipass seeding.

    Parameters
    ----------
    n_clusters : int, default=8

    init : str, default="EGD-EGC"
        Seeding preset or pass string (``"EON"``, ``"EGD"``, ``"EGD2"``,
        ``"EON-EON"``, ``"EGD-EGD"``, ``"EGD-EGC"``, ``"LSPP"``, ``"MSG"``).

    pool_rule : str, default="log"
        ``"log"``, ``"sqrt"``, ``"linear"`` or ``"fixed:N"``.

    tol : float, default=1e-4
        Lloyd stops once the Frobenius norm of the center update is below it.

    max_iter : int, default=50

    random_state : int, Generator or None, default=None

    Attributes
    ----------
    cluster_centers_ : ndarray of shape (n_clusters, n_features)
    labels_ : ndarray of shape (n_samples,)
    inertia_ : float
        Final SSE.
    n_iter_ : int
    seed_indices_ : ndarray of shape (n_clusters,)
        Rows of the training data chosen as seeds.
    """

    def __init__(self, n_clusters=8, *, init="EGD-EGC", pool_rule="log", tol=1e-4,
                 max_iter=50, random_state=None):
        self.n_clusters = n_clusters
        self.init = init
        self.pool_rule = pool_rule
        self.tol = tol
        self.max_iter = max_iter
        self.random_state = random_state

    def fit(self, X, y=None):
        X = _validate(X)
        if X.shape[0] < self.n_clusters:
            raise ValueError(
                f"n_samples={X.shape[0]} should be >= n_clusters={self.n_clusters}."
            )
        plan = parse_plan(self.init, self.pool_rule)
        self.seed_indices_ = seed(X, self.n_clusters, plan, check_rng(self.random_state))
        res = lloyd(X, X[self.seed_indices_], tol=self.tol, max_iter=self.max_iter)
        self.cluster_centers_ = res.centers
        self.labels_ = res.labels
        self.inertia_ = res.sse
        self.n_iter_ = res.iterations
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self)
        X = _validate(X, self.n_features_in_)
        return assign(X, self.cluster_centers_)

    def transform(self, X):
        """Euclidean distance from each point to every center."""
        check_is_fitted(self)
        X = _validate(X, self.n_features_in_)
        diff = X[:, None, :] - self.cluster_centers_[None]
        return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))

    def score(self, X, y=None):
        """Opposite of the SSE of ``X`` against the fitted centers."""
        check_is_fitted(self)
        return -sse(_validate(X, self.n_features_in_), self.cluster_centers_)


class MultipassGaussianMixture(DensityMixin, BaseEstimator):
    """Gaussian mixture fitted by EM from a multipass seeding.

    Parameters
    ----------
    n_components : int, default=1

    init : str, default="EGD-EGC"
        Seeding preset or pass string (``"EON"``, ``"EGD"``, ``"EGD2"``,
        ``"EGD-EGC"``, ``"EGD-EGL"``, ``"AGL"``, ``"EGD-AGL"``, ``"GGD"``).

    pool_rule : str, default="log"

    alpha : float, default=0.5
        Mahalanobis share of adaptive sampling.

    tol : float, default=1e-4
        Relative log-likelihood change that ends EM.

    max_iter : int, default=100

    random_state : int, Generator or None, default=None

    Attributes
    ----------
    weights_, means_, covariances_ : ndarray
    mixture_ : Mixture
    loglik_ : float
        Total log-likelihood of the training data.
    n_iter_ : int
    converged_ : bool
    seed_indices_ : ndarray
    """

    def __init__(self, n_components=1, *, init="EGD-EGC", pool_rule="log", alpha=0.5,
                 tol=1e-4, max_iter=100, random_state=None):
        self.n_components = n_components
        self.init = init
        self.pool_rule = pool_rule
        self.alpha = alpha
        self.tol = tol
        self.max_iter = max_iter
        self.random_state = random_state

    def fit(self, X, y=None):
        X = _validate(X)
        if X.shape[0] < self.n_components:
            raise ValueError(
                f"n_samples={X.shape[0]} should be >= n_components={self.n_components}."
            )
        plan = parse_plan(self.init, self.pool_rule, self.alpha)
        self.seed_indices_, init = seed_gmm(
            X, self.n_components, plan, check_rng(self.random_state)
        )
        res = em(X, init, tol=self.tol, max_iter=self.max_iter)
        self.mixture_ = res.mixture
        self.weights_ = res.mixture.weights
        self.means_ = res.mixture.means
        self.covariances_ = res.mixture.covs
        self.loglik_ = res.loglik
        self.n_iter_ = res.iterations
        self.converged_ = res.iterations < self.max_iter or (
            len(res.loglik_history) > 1
            and abs(res.loglik_history[-1] - res.loglik_history[-2])
            < self.tol * abs(res.loglik_history[-2])
        )
        self.n_features_in_ = X.shape[1]
        return self

    def score_samples(self, X):
        """Log-density of each point."""
        check_is_fitted(self)
        X = _validate(X, self.n_features_in_)
        return logsumexp(component_log_pdfs(self.mixture_, X), axis=1)

    def score(self, X, y=None):
        """Mean per-point log-likelihood."""
        return float(np.mean(self.score_samples(X)))

    def predict_proba(self, X):
        check_is_fitted(self)
        return np.exp(e_step(self.mixture_, _validate(X, self.n_features_in_)))

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)

    def sample(self, n_samples=1, random_state=None):
        check_is_fitted(self)
        return sample_dataset(self.mixture_, n_samples, check_rng(random_state))
