"""Multipass, lookahead seeding for k-means and Gaussian mixture EM."""

from .dataset import knn, load_csv, minmax_normalize
from .estimators import MultipassGaussianMixture, MultipassKMeans
from .gmm import Mixture, em, means_to_gmm, mixture_loglik
from .gmm_seeding import GMM_PRESETS, seed_gmm
from .kmeans import lloyd, sse, sse_com
from .seeding import KMEANS_PRESETS, parse_plan, seed

__version__ = "0.1.0"

__all__ = [
    "GMM_PRESETS",
    "KMEANS_PRESETS",
    "Mixture",
    "MultipassGaussianMixture",
    "MultipassKMeans",
    "em",
    "knn",
    "lloyd",
    "load_csv",
    "means_to_gmm",
    "minmax_normalize",
    "mixture_loglik",
    "parse_plan",
    "seed",
    "seed_gmm",
    "sse",
    "sse_com",
]
