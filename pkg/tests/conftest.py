import numpy as np
import pytest

from routeproj.geometry import subgraph_matrix
from routeproj.instances import generate


def random_subgraph(rng, k=100, span=1.0, offset=0.0):
    """Random [anchor | k candidates | current] matrix inside a square."""
    pts = rng.random((k + 2, 2)) * span + offset
    return pts


def knn_subgraph(coords, query_id, first_id, k, visited):
    """Brute-force KNN subgraph for test fixtures (index-free)."""
    q = coords[query_id]
    d = np.hypot(coords[:, 0] - q[0], coords[:, 1] - q[1])
    mask = np.ones(len(coords), dtype=bool)
    mask[list(visited)] = False
    ids = np.flatnonzero(mask)
    order = np.lexsort((ids, d[ids]))
    cands = ids[order][:k]
    return subgraph_matrix(coords, first_id, cands, query_id)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tsp_small():
    return generate("uniform", 60, kind="tsp", seed=7)


@pytest.fixture
def cvrp_small():
    return generate("uniform", 40, kind="cvrp", seed=7)
