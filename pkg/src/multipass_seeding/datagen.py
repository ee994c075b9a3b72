"""Synthetic ground-truth mixtures and datasets sampled from them."""

from dataclasses import asdict, dataclass
from itertools import product

import numpy as np

from ._rng import check_rng
from .dataset import check_points
from .gmm import Mixture

__all__ = [
    "ModelSpec",
    "PlacementError",
    "generate_model",
    "sample_dataset",
    "add_noise",
    "grid_model",
    "default_model_grid",
    "min_separation_ratio",
]


class PlacementError(RuntimeError):
    """Component means could not be placed with the requested separation."""


@dataclass(frozen=True)
class ModelSpec:
    """Parameters of a generated mixture.

    Parameters
    ----------
    K : int
        Number of components.
    d : int
        Dimension.
    separation : float
        ``s`` in ``|mu_i - mu_j| >= s * max(sqrt(tr S_i), sqrt(tr S_j))``.
    weight_mode : {"uniform", "different"}
    size_mode : {"constant", "different"}
    eccentricity : float
        Ratio of the largest to the smallest covariance eigenvalue, >= 1.
    seed : int or None
        Stream for the model itself (rotations, placement, weights).
    """

    K: int = 10
    d: int = 2
    separation: float = 1.0
    weight_mode: str = "uniform"
    size_mode: str = "constant"
    eccentricity: float = 1.0
    seed: int = None

    def __post_init__(self):
        if self.K < 1 or self.d < 1:
            raise ValueError("K and d must be >= 1")
        if not self.separation > 0:
            raise ValueError("separation must be positive")
        if self.eccentricity < 1:
            raise ValueError("eccentricity must be >= 1")
        if self.weight_mode not in ("uniform", "different"):
            raise ValueError(f"unknown weight_mode {self.weight_mode!r}")
        if self.size_mode not in ("constant", "different"):
            raise ValueError(f"unknown size_mode {self.size_mode!r}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})


def _random_rotation(d, rng):
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def min_separation_ratio(mix):
    """Smallest ``|mu_i - mu_j| / max(sqrt(tr S_i), sqrt(tr S_j))`` over pairs."""
    root_tr = np.sqrt(np.trace(mix.covs, axis1=1, axis2=2))
    best = np.inf
    for i in range(mix.n_components):
        for j in range(i):
            gap = np.linalg.norm(mix.means[i] - mix.means[j])
            best = min(best, gap / max(root_tr[i], root_tr[j]))
    return best


def generate_model(spec, rng=None, max_attempts=10000):
    """Draw a mixture satisfying ``spec``.

    Covariance spectra are geometric from ``lam`` to ``e * lam`` and rotated
    at random; ``lam`` is 1, or drawn from [0.5, 2] per component when
    ``size_mode="different"``. Means are placed one by one by rejection
    sampling in a box sized to hold ``K`` components.
    """
    rng = check_rng(spec.seed if rng is None else rng)
    K, d = spec.K, spec.d
    exps = np.arange(d) / (d - 1) if d > 1 else np.zeros(1)
    covs = np.empty((K, d, d))
    for k in range(K):
        lam = 1.0 if spec.size_mode == "constant" else rng.uniform(0.5, 2.0)
        spectrum = lam * spec.eccentricity**exps
        if spec.eccentricity == 1:
            covs[k] = lam * np.eye(d)
        else:
            Q = _random_rotation(d, rng)
            cov = (Q * spectrum) @ Q.T
            covs[k] = 0.5 * (cov + cov.T)

    root_tr = np.sqrt(np.trace(covs, axis1=1, axis2=2))
    # box side: room for K balls of the largest required radius
    side = spec.separation * root_tr.max() * max(2.0, 2.0 * K ** (1.0 / d))
    means = np.empty((K, d))
    for k in range(K):
        for _ in range(max_attempts):
            cand = rng.uniform(0.0, side, size=d)
            gaps = np.linalg.norm(means[:k] - cand, axis=1)
            need = spec.separation * np.maximum(root_tr[:k], root_tr[k])
            if np.all(gaps >= need):
                means[k] = cand
                break
        else:
            raise PlacementError(
                f"could not place component {k} after {max_attempts} attempts"
            )

    if spec.weight_mode == "uniform":
        weights = np.full(K, 1.0 / K)
    else:
        weights = rng.dirichlet(np.full(K, 2.0))
        weights /= weights.sum()
    return Mixture(weights, means, covs)


def sample_dataset(mix, n, rng=None):
    """Draw ``n`` points; returns the points and their component labels."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = check_rng(rng)
    chol = mix.cholesky()
    labels = rng.choice(mix.n_components, size=n, p=mix.weights)
    z = rng.standard_normal((n, mix.d))
    X = mix.means[labels] + np.einsum("nij,nj->ni", chol[labels], z)
    return X, labels


def add_noise(X, noise_count=1000, expansion=0.2, rng=None):
    """Append points drawn uniformly in the expanded bounding box of ``X``.

    Each side of the axis-aligned bounding box is widened by the factor
    ``1 + expansion`` about its center.
    """
    if not expansion > 0:
        raise ValueError("expansion must be positive")
    X = check_points(X)
    if noise_count == 0:
        return X.copy()
    rng = check_rng(rng)
    lo, hi = X.min(axis=0), X.max(axis=0)
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo) * (1.0 + expansion)
    noise = rng.uniform(center - half, center + half, size=(noise_count, X.shape[1]))
    return np.vstack([X, noise])


def grid_model():
    """27 elongated components on the lattice {0, 1, 2}^3.

    Each covariance is axis-aligned with variances (0.2^2, 0.04^2, 0.04^2),
    the long axis cycling through x, y, z with the lattice position.
    """
    means, covs = [], []
    for i, j, k in product(range(3), repeat=3):
        long_axis = (i + j + k) % 3
        var = np.full(3, 0.04**2)
        var[long_axis] = 0.2**2
        means.append([i, j, k])
        covs.append(np.diag(var))
    return Mixture(np.full(27, 1.0 / 27), np.asarray(means, dtype=float), np.stack(covs))


def default_model_grid(K=10, d=2):
    """The 30 model specs in three groups.

    ``spherical``: e = 1 with every separation / weight / size combination
    (12 models). ``elliptical``: e in {2, 5, 10} x s in {0.5, 1, 2}, uniform
    weights, constant size (9). ``elliptical-difficult``: same grid with
    different weights and sizes (9).
    """
    groups = {"spherical": [], "elliptical": [], "elliptical-difficult": []}
    seps = (0.5, 1.0, 2.0)
    for s, w, z in product(seps, ("uniform", "different"), ("constant", "different")):
        groups["spherical"].append(ModelSpec(K, d, s, w, z, 1.0))
    for e, s in product((2.0, 5.0, 10.0), seps):
        groups["elliptical"].append(ModelSpec(K, d, s, "uniform", "constant", e))
        groups["elliptical-difficult"].append(ModelSpec(K, d, s, "different", "different", e))
    return groups
