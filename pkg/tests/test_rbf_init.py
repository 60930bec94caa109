#!/usr/bin/env python

import math

import numpy as np
import pytest

from fusion_impute.rbf_init import (
    ClusteringError,
    RbfBasis,
    RbfConfig,
    compute_width,
    fit_basis,
    kmeans,
    max_pairwise_distance,
)

# HELPER FUNCTIONS


def two_blobs(n_per_blob=50, seed=0):
    rng = np.random.default_rng(seed)
    blobs = []
    for center in (0.0, 100.0):
        angle = rng.uniform(0, 2 * np.pi, n_per_blob)
        radius = rng.uniform(0, 1, n_per_blob)
        blobs.append(center + np.column_stack([radius * np.cos(angle), radius * np.sin(angle)]))
    return np.vstack(blobs)


def sorted_rows(matrix):
    return matrix[np.lexsort(matrix.T[::-1])]


# TESTS

def test_kmeans_k_equals_n():
    data = np.random.default_rng(0).normal(size=(6, 3))
    centroids = kmeans(data, 6, seed=1)
    np.testing.assert_allclose(sorted_rows(centroids), sorted_rows(data), rtol=0, atol=1e-12)


def test_kmeans_two_blobs():
    centroids = kmeans(two_blobs(), 2, seed=3)
    for center in (0.0, 100.0):
        distances = np.linalg.norm(centroids - center, axis=1)
        assert distances.min() < 1.0


def test_kmeans_single_cluster_is_mean():
    data = np.random.default_rng(1).normal(size=(30, 4))
    np.testing.assert_allclose(kmeans(data, 1), data.mean(axis=0)[None, :], atol=1e-12)


@pytest.mark.parametrize("k", [0, 11])
def test_kmeans_invalid_k(k):
    with pytest.raises(ClusteringError, match="1 <= k <= n"):
        kmeans(np.zeros((10, 2)), k)


def test_kmeans_objective_non_increasing():
    data = np.random.default_rng(2).normal(size=(200, 3))
    _, history = kmeans(data, 8, seed=4, return_history=True)
    assert len(history) >= 2
    assert all(later <= earlier + 1e-9 for earlier, later in zip(history, history[1:]))


def test_kmeans_deterministic():
    data = np.random.default_rng(3).normal(size=(100, 2))
    np.testing.assert_array_equal(kmeans(data, 5, seed=9), kmeans(data, 5, seed=9))


def test_kmeans_identical_points():
    centroids = kmeans(np.ones((5, 2)), 3, seed=0)
    np.testing.assert_array_equal(centroids, np.ones((3, 2)))


def test_compute_width_examples():
    assert compute_width(np.array([[0.0], [3.0]])) == pytest.approx(1.5)
    assert compute_width(np.array([[0.0], [1.0], [2.0]])) == pytest.approx(2 / math.sqrt(6))


def test_compute_width_scales_with_centroids():
    centroids = np.random.default_rng(5).normal(size=(10, 4))
    assert compute_width(3.5 * centroids) == pytest.approx(3.5 * compute_width(centroids))


def test_compute_width_matches_brute_force():
    centroids = np.random.default_rng(6).normal(size=(7, 3))
    c_max = 0.0
    for a in range(7):
        for b in range(7):
            if a != b:
                c_max = max(c_max, float(np.linalg.norm(centroids[a] - centroids[b])))
    assert max_pairwise_distance(centroids) == c_max
    assert compute_width(centroids) == c_max / math.sqrt(14)


def test_compute_width_errors():
    with pytest.raises(ClusteringError, match="at least 2 centroids"):
        compute_width(np.zeros((1, 2)))
    with pytest.raises(ClusteringError, match="Re-cluster with a smaller k."):
        compute_width(np.ones((3, 2)))


def test_rbf_basis_invariants():
    basis = RbfBasis(np.array([[0.0, 1.0], [2.0, 3.0]]), 0.5)
    assert basis.h == 2
    assert basis.dim == 2
    with pytest.raises(ValueError):
        basis.centroids[0, 0] = 1.0
    with pytest.raises(ClusteringError, match="at least 2 centroids"):
        RbfBasis(np.zeros((1, 2)), 1.0)
    with pytest.raises(ClusteringError, match="positive"):
        RbfBasis(np.array([[0.0], [1.0]]), 0.0)


def test_rbf_config_validation():
    assert RbfConfig().k is None
    with pytest.raises(ValueError, match="at least 2"):
        RbfConfig(k=1)
    with pytest.raises(TypeError, match="kmeans_max_iters"):
        RbfConfig(kmeans_max_iters=1.5)


def test_fit_basis():
    data = two_blobs()
    basis = fit_basis(data, RbfConfig(seed=1), n_neurons=4)
    assert basis.h == 4
    assert basis.width == pytest.approx(compute_width(basis.centroids))
    with pytest.raises(ClusteringError, match="One centroid per RBF neuron"):
        fit_basis(data, RbfConfig(k=3), n_neurons=4)


def test_fit_basis_degenerate_data():
    with pytest.raises(ClusteringError, match="smaller k"):
        fit_basis(np.full((10, 3), 2.0), RbfConfig(), n_neurons=3)
