import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from routeproj.knn import KnnIndex, brute_force_knn


def test_basic_ordering():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
    idx = KnnIndex.build(pts, force_python=True)
    assert idx.knn_unvisited(pts[0], 2, exclude=[0]).tolist() == [1, 2]
    assert idx.knn_unvisited(pts[0], 10, exclude=[0]).tolist() == [1, 2, 3]


def test_distance_tie_prefers_lower_id():
    # ids 4 and 7 equidistant from the query
    pts = np.zeros((8, 2))
    pts[:, 0] = np.arange(8, dtype=float)
    pts[4] = (10.0, 1.0)
    pts[7] = (10.0, -1.0)
    idx = KnnIndex.build(pts, force_python=True)
    out = idx.knn_unvisited(np.array([10.0, 0.0]), 2)
    assert out.tolist() == [4, 7]


def test_remove_is_permanent_and_double_remove_raises():
    pts = np.random.default_rng(0).random((20, 2))
    idx = KnnIndex.build(pts, force_python=True)
    idx.remove(3)
    assert 3 not in idx.knn_unvisited(pts[3], 20).tolist()
    with pytest.raises(KeyError):
        idx.remove(3)
    with pytest.raises(KeyError):
        idx.remove(999)


def test_remove_all_yields_empty_result():
    pts = np.random.default_rng(1).random((5, 2))
    idx = KnnIndex.build(pts, force_python=True)
    for i in range(5):
        idx.remove(i)
    assert idx.alive_count == 0
    assert len(idx.knn_unvisited(np.array([0.5, 0.5]), 3)) == 0


def test_exclude_is_transient():
    pts = np.random.default_rng(2).random((10, 2))
    idx = KnnIndex.build(pts, force_python=True)
    without = idx.knn_unvisited(pts[0], 10, exclude=[4])
    assert 4 not in without.tolist()
    assert 4 in idx.knn_unvisited(pts[0], 10).tolist()


def test_matches_brute_force_with_random_removals():
    rng = np.random.default_rng(42)
    pts = rng.random((2000, 2))
    idx = KnnIndex.build(pts, force_python=True)
    alive = np.ones(2000, dtype=bool)
    mismatches = 0
    for _ in range(500):
        # random removal burst, then a query
        for node in rng.choice(np.flatnonzero(alive), size=3, replace=False):
            idx.remove(int(node))
            alive[node] = False
        q = rng.random(2)
        k = int(rng.integers(1, 120))
        got = idx.knn_unvisited(q, k)
        want = brute_force_knn(pts, q, k, alive=alive)
        if got.tolist() != want.tolist():
            mismatches += 1
    assert mismatches == 0


def test_queries_outside_the_bounding_box():
    rng = np.random.default_rng(3)
    pts = rng.random((300, 2))
    idx = KnnIndex.build(pts, force_python=True)
    alive = np.ones(300, dtype=bool)
    for q in ([-5.0, 0.5], [0.5, 7.0], [-3.0, -3.0], [100.0, 100.0]):
        got = idx.knn_unvisited(np.array(q), 10)
        want = brute_force_knn(pts, np.array(q), 10, alive=alive)
        assert got.tolist() == want.tolist()


def test_degenerate_clouds():
    # all points identical: pure id ordering
    pts = np.full((6, 2), 0.25)
    idx = KnnIndex.build(pts, force_python=True)
    assert idx.knn_unvisited(np.array([0.25, 0.25]), 6).tolist() == [0, 1, 2, 3, 4, 5]
    # collinear points
    line = np.stack([np.linspace(0, 1, 50), np.zeros(50)], axis=1)
    idx2 = KnnIndex.build(line, force_python=True)
    got = idx2.knn_unvisited(np.array([0.0, 0.0]), 5, exclude=[0])
    assert got.tolist() == [1, 2, 3, 4, 5]


def test_heavy_removal_triggers_rebuild_and_stays_exact():
    rng = np.random.default_rng(9)
    pts = rng.random((400, 2))
    idx = KnnIndex.build(pts, force_python=True)
    alive = np.ones(400, dtype=bool)
    order = rng.permutation(400)
    for node in order[:350]:
        idx.remove(int(node))
        alive[node] = False
    assert idx.alive_count == 50
    for _ in range(20):
        q = rng.random(2)
        got = idx.knn_unvisited(q, 12)
        want = brute_force_knn(pts, q, 12, alive=alive)
        assert got.tolist() == want.tolist()


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    n=st.integers(2, 120),
    k=st.integers(1, 30),
    n_remove=st.integers(0, 60),
)
def test_property_matches_brute_force(seed, n, k, n_remove):
    rng = np.random.default_rng(seed)
    # quantized coordinates force plenty of exact distance ties
    pts = np.round(rng.random((n, 2)) * 4) / 4
    idx = KnnIndex.build(pts, force_python=True)
    alive = np.ones(n, dtype=bool)
    for node in rng.permutation(n)[: min(n_remove, n - 1)]:
        idx.remove(int(node))
        alive[node] = False
    q = np.round(rng.random(2) * 4) / 4
    got = idx.knn_unvisited(q, k)
    want = brute_force_knn(pts, q, k, alive=alive)
    assert got.tolist() == want.tolist()


@pytest.mark.slow
def test_query_cost_grows_sublinearly():
    # per-query time at n=1e5 must stay under 20x the n=1e3 time
    rng = np.random.default_rng(7)
    per_query = {}
    for n in (1_000, 100_000):
        pts = rng.random((n, 2))
        idx = KnnIndex.build(pts, force_python=True)
        queries = rng.random((200, 2))
        idx.knn_unvisited(queries[0], 100)  # warm up
        t0 = time.perf_counter()
        for q in queries:
            idx.knn_unvisited(q, 100)
        per_query[n] = (time.perf_counter() - t0) / len(queries)
    assert per_query[100_000] < 20 * per_query[1_000], per_query
