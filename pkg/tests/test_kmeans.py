import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from multipass_seeding.dataset import DataError
from multipass_seeding.kmeans import assign, centroids, lloyd, partition_cost, sse, sse_com

from .oracles import optimal_partition_sse, partition_cost_loop, sse_loop

small_points = hnp.arrays(
    np.float64, st.tuples(st.integers(3, 9), st.integers(1, 2)),
    elements=st.integers(-20, 20).map(lambda v: v / 4),
)


def col(*v):
    return np.array(v, dtype=float).reshape(-1, 1)


def test_assign_examples():
    assert list(assign(col(0, 10), col(0, 10))) == [0, 1]
    assert list(assign(col(5), col(0, 10))) == [0]
    assert list(assign(col(1, 2, 3), col(7))) == [0, 0, 0]


def test_assign_dimension_mismatch():
    with pytest.raises(DataError):
        assign(np.zeros((3, 2)), np.zeros((1, 3)))


def test_centroids_examples():
    C, empty = centroids(col(0, 2), [0, 0], 1)
    assert C[0, 0] == 1.0 and empty.size == 0
    C, empty = centroids(col(0, 2), [0, 1], 2)
    np.testing.assert_array_equal(C.ravel(), [0, 2])


def test_centroids_empty_cluster_gets_farthest_point():
    X = col(0, 1, 10)
    C, empty = centroids(X, [0, 0, 0], 2)
    assert list(empty) == [1]
    # centroid of cluster 0 is 11/3; the farthest point is 10
    assert C[1, 0] == 10.0


def test_centroids_two_empty_clusters_get_distinct_points():
    X = col(0, 1, 10, -9)
    C, empty = centroids(X, [0, 0, 0, 0], 3)
    assert list(empty) == [1, 2]
    assert C[1, 0] != C[2, 0]


def test_sse_examples():
    assert sse(col(0, 2), col(1)) == 2.0
    X = col(0, 1, 10, 11)
    assert sse(X, X) == 0.0
    assert sse(X, col(0.5, 10.5)) == 1.0


def test_sse_com_examples():
    X = col(0, 1, 10, 11)
    # induced centroids 0.5 and 10.5, four residuals of 0.25
    assert sse_com(X, [0, 2]) == 1.0
    assert sse_com(X, [0, 1, 2, 3]) == 0.0
    assert sse_com(X, [3]) == pytest.approx(float(np.sum((X - X.mean()) ** 2)))


@given(small_points, st.data())
def test_sse_matches_loop(X, data):
    K = data.draw(st.integers(1, 3))
    C = X[:K] + 0.125
    assert sse(X, C) == pytest.approx(sse_loop(X, C), rel=1e-12, abs=1e-12)


@given(small_points, st.data())
def test_sse_com_matches_oracle_and_bounds_phi_s(X, data):
    n = X.shape[0]
    seeds = data.draw(st.lists(st.integers(0, n - 1), min_size=1, max_size=3, unique=True))
    val = sse_com(X, seeds)
    assert val == pytest.approx(partition_cost_loop(X, seeds), rel=1e-9, abs=1e-9)
    assert val <= sse(X, X[seeds]) + 1e-9


def test_partition_cost_ignores_nearest_center():
    X = col(0, 1, 2)
    # labels keep 1 with 0 even though its centroid (0.5) is not the nearest
    assert partition_cost(X, np.array([0, 0, 1]), 2) == 0.5


def test_lloyd_examples():
    X = col(0, 1, 10, 11)
    res = lloyd(X, col(0, 10))
    np.testing.assert_allclose(res.centers.ravel(), [0.5, 10.5])
    assert res.sse == 1.0
    assert res.sse == optimal_partition_sse(X, 2)


def test_lloyd_fixed_point():
    X = col(-2, -1, 1, 2)
    res = lloyd(X, col(-1.5, 1.5))
    assert res.iterations == 1
    assert res.sse_history == [1.0, 1.0]


def test_lloyd_huge_tol_stops_after_one_update():
    X = col(0, 1, 10, 11, 30)
    res = lloyd(X, col(0, 1), tol=1e9)
    assert res.iterations == 1


def test_lloyd_max_iter_cap(rng):
    X = rng.normal(size=(200, 2))
    res = lloyd(X, X[:8], max_iter=2)
    assert res.iterations <= 2


def test_lloyd_rejects_bad_parameters():
    with pytest.raises(ValueError):
        lloyd(col(0, 1), col(0), tol=0)
    with pytest.raises(ValueError):
        lloyd(col(0, 1), col(0), max_iter=0)


@given(small_points, st.data())
def test_lloyd_monotone_and_above_optimum(X, data):
    K = data.draw(st.integers(1, min(3, X.shape[0])))
    idx = data.draw(st.lists(st.integers(0, X.shape[0] - 1), min_size=K, max_size=K, unique=True))
    res = lloyd(X, X[idx])
    h = res.sse_history
    assert all(b <= a for a, b in zip(h, h[1:]))
    assert res.sse >= optimal_partition_sse(X, K) - 1e-9
    assert res.sse == pytest.approx(sse(X, res.centers))
    assert res.iterations <= 50


@given(small_points, st.data())
def test_half_step_non_increasing(X, data):
    K = data.draw(st.integers(1, 3))
    C = X[:K] + data.draw(st.floats(-1, 1))
    C2, empty = centroids(X, assign(X, C), K)
    if empty.size == 0:
        assert sse(X, C2) <= sse(X, C) + 1e-9
