"""Small geometric helpers shared by every other module.

Coordinates are plain float64 numpy arrays of shape (n, 2). Subgraphs handed
to projection strategies follow one fixed row layout:

    row 0      anchor node (tour start for TSP, depot for CVRP)
    rows 1..m  candidate nodes
    row m+1    current node (the one the walk sits on)
"""

from __future__ import annotations

import numpy as np

ANCHOR_ROW = 0


def as_coords(points) -> np.ndarray:
    """Coerce to a float64 (n, 2) coordinate matrix, validating shape and finiteness."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected an (n, 2) coordinate matrix, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("coordinates must be finite")
    return arr


def euclid(a, b) -> float:
    """Euclidean distance between two points."""
    return float(np.hypot(a[0] - b[0], a[1] - b[1]))


def pairwise_distances(coords: np.ndarray) -> np.ndarray:
    """Dense (n, n) Euclidean distance matrix."""
    diff = coords[:, None, :] - coords[None, :, :]
    return np.hypot(diff[..., 0], diff[..., 1])


def bbox(coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(min_xy, max_xy) of a non-empty coordinate matrix."""
    if len(coords) == 0:
        raise ValueError("bbox of an empty point set")
    return coords.min(axis=0), coords.max(axis=0)


def subgraph_matrix(coords: np.ndarray, anchor: int, candidates: np.ndarray, current: int) -> np.ndarray:
    """Assemble the [anchor | candidates | current] matrix projections consume."""
    rows = np.empty((len(candidates) + 2, 2), dtype=np.float64)
    rows[0] = coords[anchor]
    rows[1:-1] = coords[candidates]
    rows[-1] = coords[current]
    return rows


def tour_length(coords: np.ndarray, tour, rounded: bool = False) -> float:
    """Length of the closed tour visiting `tour` in order and returning to its start.

    `rounded` switches every edge to nearest-integer cost (TSPLIB EUC_2D convention).
    """
    idx = np.asarray(tour, dtype=np.intp)
    if len(idx) < 2:
        return 0.0
    d = np.hypot(*(coords[idx] - coords[np.roll(idx, -1)]).T)
    if rounded:
        d = np.rint(d)
    return float(d.sum())


def path_length(coords: np.ndarray, path, rounded: bool = False) -> float:
    """Length of the open path visiting `path` in order."""
    idx = np.asarray(path, dtype=np.intp)
    if len(idx) < 2:
        return 0.0
    d = np.hypot(*(coords[idx[1:]] - coords[idx[:-1]]).T)
    if rounded:
        d = np.rint(d)
    return float(d.sum())
