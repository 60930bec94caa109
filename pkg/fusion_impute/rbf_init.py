"""
Centroids and the shared width of the radial basis function neurons,
found once on the pre-filled data by k-means.
"""
from dataclasses import dataclass
import logging
import math

import numpy as np

from fusion_impute.helper_functions import ImputeError, arg_validator, pretty_logger

logger = logging.getLogger(__name__)


class ClusteringError(ImputeError):
    pass


@dataclass(frozen=True)
class RbfConfig:
    """
    Parameters
    ----------
    k: int or None, default None
        Number of centroids. ``None`` ties it to the number of RBF neurons.
    kmeans_max_iters: int, default 100
    kmeans_tol: float, default 1e-6
        Lloyd iterations stop once no centroid moves further than this.
    seed: int, default 0
    """

    k: int = None
    kmeans_max_iters: int = 100
    kmeans_tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        arg_validator(self.__dict__,
                      {"k": {"valid_types": [int, type(None)]},
                       "kmeans_max_iters": {"valid_types": [int], "valid_range": (1, None)},
                       "kmeans_tol": {"valid_types": [float, int], "valid_range": (0, None)},
                       "seed": {"valid_types": [int], "valid_range": (0, None)}})
        if self.k is not None and self.k < 2:
            raise ValueError("The Argument `k` needs to be at least 2, the given value "
                             "was `{}`.".format(self.k))


@dataclass(frozen=True)
class RbfBasis:
    """
    Fixed parameters of the RBF neurons: one centroid per neuron and one
    width shared by all of them.
    """

    centroids: np.ndarray
    width: float

    def __post_init__(self):
        centroids = np.array(self.centroids, dtype=float)
        centroids.flags.writeable = False
        object.__setattr__(self, "centroids", centroids)
        if centroids.ndim != 2 or centroids.shape[0] < 2:
            raise ClusteringError("An RBF basis needs at least 2 centroids.")
        if not self.width > 0:
            raise ClusteringError("The RBF width needs to be positive, got {}.".format(self.width))

    @property
    def h(self):
        return self.centroids.shape[0]

    @property
    def dim(self):
        return self.centroids.shape[1]


def _squared_distances(data, centroids):
    return ((data[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def _seed_centroids(data, k, rng):
    # k-means++: later centroids drawn with probability proportional to D^2
    n = data.shape[0]
    chosen = [int(rng.integers(n))]
    closest = ((data - data[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            probs = closest / total
        else:
            # every point coincides with a centroid, draw among the unused ones
            probs = np.ones(n)
            probs[chosen] = 0
            probs /= probs.sum()
        nxt = int(rng.choice(n, p=probs))
        chosen.append(nxt)
        closest = np.minimum(closest, ((data - data[nxt]) ** 2).sum(axis=1))
    return data[chosen].copy()


def kmeans(data, k, seed=0, max_iters=100, tol=1e-6, return_history=False):
    """
    Lloyd's k-means from k-means++ seeding.

    Clusters left empty by an assignment step are re-seeded to the point
    lying farthest from its own centroid.

    Parameters
    ----------
    data: np.ndarray
        ``n x s`` matrix without missing values.
    k: int
        Number of centroids, at most ``n``.
    seed: int, default 0
    max_iters: int, default 100
    tol: float, default 1e-6
    return_history: bool, default False
        Also return the objective (summed squared distance to the assigned
        centroid) after every assignment step.

    Returns
    -------
    centroids: np.ndarray
        ``k x s`` matrix, or ``(centroids, history)`` if `return_history`.

    Raises
    ------
    ClusteringError
        If ``k > n`` or ``k < 1``.
    """
    data = np.asarray(data, dtype=float)
    n = data.shape[0]
    if not 1 <= k <= n:
        raise ClusteringError("k-means needs 1 <= k <= n, got k={} for {} samples.".format(k, n))
    rng = np.random.default_rng(seed)
    centroids = _seed_centroids(data, k, rng)
    history = []
    for iteration in range(max_iters):
        dist = _squared_distances(data, centroids)
        labels = dist.argmin(axis=1)
        to_own = dist[np.arange(n), labels]
        history.append(float(to_own.sum()))
        updated = np.empty_like(centroids)
        for g in range(k):
            members = labels == g
            if members.any():
                updated[g] = data[members].mean(axis=0)
            else:
                far = int(to_own.argmax())
                updated[g] = data[far]
                to_own[far] = 0.0
        shift = np.sqrt(((updated - centroids) ** 2).sum(axis=1)).max()
        centroids = updated
        if shift < tol:
            break
    logger.debug("k-means with k=%d stopped after %d iterations", k, iteration + 1)
    if return_history:
        return centroids, history
    return centroids


def max_pairwise_distance(centroids):
    centroids = np.asarray(centroids, dtype=float)
    c_max = 0.0
    for a in range(len(centroids)):
        for b in range(a + 1, len(centroids)):
            c_max = max(c_max, float(np.linalg.norm(centroids[a] - centroids[b])))
    return c_max


def compute_width(centroids):
    """
    Shared RBF width ``c_max / sqrt(2h)``, where ``c_max`` is the largest
    euclidean distance between two of the ``h`` centroids.

    Raises
    ------
    ClusteringError
        If fewer than 2 centroids are given or all of them coincide.
    """
    h = len(centroids)
    if h < 2:
        raise ClusteringError("The width needs at least 2 centroids, got {}.".format(h))
    c_max = max_pairwise_distance(centroids)
    if c_max == 0:
        raise ClusteringError("All {} centroids coincide, so the width would be 0. "
                              "Re-cluster with a smaller k.".format(h))
    return c_max / math.sqrt(2 * h)


def fit_basis(data, cfg, n_neurons):
    """
    Clusters the pre-filled data and returns the basis of `n_neurons`
    RBF neurons.

    Parameters
    ----------
    data: np.ndarray
        Pre-filled ``n x s`` matrix.
    cfg: RbfConfig
    n_neurons: int
        Number of RBF neurons, used when ``cfg.k`` is None.

    Returns
    -------
    basis: RbfBasis
    """
    k = n_neurons if cfg.k is None else cfg.k
    if k != n_neurons:
        raise ClusteringError("One centroid per RBF neuron is needed, got k={} for {} "
                              "neurons.".format(k, n_neurons))
    centroids = kmeans(data, k, seed=cfg.seed, max_iters=cfg.kmeans_max_iters,
                       tol=cfg.kmeans_tol)
    width = compute_width(centroids)
    pretty_logger("RBF BASIS", "{} centroids, shared width {:.6g}".format(k, width),
                  level=logging.DEBUG)
    return RbfBasis(centroids, width)
