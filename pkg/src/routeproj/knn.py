"""Exact k-nearest-neighbour index over a fixed point set with deletions.

A uniform grid (about two points per cell) is searched ring by ring outward
from the query's cell. A ring is only skipped once the k-th best squared
distance found so far is strictly smaller than the ring's lower bound, so
results are exact, including ties. Ordering is ascending by (distance, id);
equal distances break toward the smaller id.

Deletions are tombstones; once more than half the indexed points are dead the
grid is rebuilt over the survivors at matching density.
"""

from __future__ import annotations

import numpy as np

from . import _backend
from .geometry import as_coords


class PyGridIndex:
    """Numpy implementation of the grid index. See module docstring."""

    def __init__(self, coords: np.ndarray):
        self.coords = np.ascontiguousarray(coords, dtype=np.float64)
        self.n = len(coords)
        if self.n == 0:
            raise ValueError("cannot index an empty point set")
        self.alive = np.ones(self.n, dtype=bool)
        self.alive_count = self.n
        self._rebuild()

    def _rebuild(self) -> None:
        ids = np.flatnonzero(self.alive)
        pts = self.coords[ids]
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        span = float(max(hi[0] - lo[0], hi[1] - lo[1]))
        m = max(1, int(np.ceil(np.sqrt(len(ids) / 2.0))))
        self._cell = span / m if span > 0 else 1.0
        self._lo = lo
        self._ncx = min(m, int((hi[0] - lo[0]) / self._cell) + 1)
        self._ncy = min(m, int((hi[1] - lo[1]) / self._cell) + 1)
        cx = np.minimum((pts[:, 0] - lo[0]) / self._cell, self._ncx - 1).astype(np.intp)
        cy = np.minimum((pts[:, 1] - lo[1]) / self._cell, self._ncy - 1).astype(np.intp)
        cell_of = cy * self._ncx + cx
        order = np.argsort(cell_of, kind="stable")
        self._order = ids[order]
        self._starts = np.zeros(self._ncx * self._ncy + 1, dtype=np.intp)
        np.add.at(self._starts, cell_of + 1, 1)
        np.cumsum(self._starts, out=self._starts)
        self._built_alive = self.alive_count

    def remove(self, node_id: int) -> None:
        i = int(node_id)
        if not (0 <= i < self.n):
            raise KeyError(f"node id {node_id} is not in the index")
        if not self.alive[i]:
            raise KeyError(f"node id {node_id} was already removed")
        self.alive[i] = False
        self.alive_count -= 1
        dead_since_build = self._built_alive - self.alive_count
        if self.alive_count > 0 and dead_since_build * 2 > self._built_alive:
            self._rebuild()

    def _ring_cells(self, ccx: int, ccy: int, r: int) -> list[int]:
        """Flat indices of in-bounds cells at Chebyshev distance r from (ccx, ccy)."""
        ncx, ncy = self._ncx, self._ncy
        if r == 0:
            if 0 <= ccx < ncx and 0 <= ccy < ncy:
                return [ccy * ncx + ccx]
            return []
        out = []
        x0, x1 = ccx - r, ccx + r
        y0, y1 = ccy - r, ccy + r
        for y in (y0, y1):
            if 0 <= y < ncy:
                for x in range(max(x0, 0), min(x1, ncx - 1) + 1):
                    out.append(y * ncx + x)
        for x in (x0, x1):
            if 0 <= x < ncx:
                for y in range(max(y0 + 1, 0), min(y1 - 1, ncy - 1) + 1):
                    out.append(y * ncx + x)
        return out

    def query(self, point, k: int, exclude=()) -> np.ndarray:
        """Ids of up to k alive, non-excluded points nearest to `point`.

        Sorted ascending by (squared distance, id). Fewer than k results means
        the index ran out of eligible points.
        """
        if k < 0:
            raise ValueError("k must be >= 0")
        if k == 0:
            return np.empty(0, dtype=np.intp)
        qx, qy = float(point[0]), float(point[1])
        excl_list = [int(e) for e in exclude]
        excl = np.asarray(excl_list, dtype=np.intp) if excl_list else None
        cell = self._cell
        ccx = int(np.floor((qx - self._lo[0]) / cell))
        ccy = int(np.floor((qy - self._lo[1]) / cell))
        max_ring = max(ccx, self._ncx - 1 - ccx, ccy, self._ncy - 1 - ccy, 0)

        best_d2 = np.empty(0)
        best_id = np.empty(0, dtype=np.intp)
        kth_d2 = np.inf
        for r in range(max_ring + 1):
            if len(best_id) >= k and self._ring_bound(qx, qy, ccx, ccy, r) ** 2 > kth_d2:
                break
            ids_parts = []
            for c in self._ring_cells(ccx, ccy, r):
                s, e = self._starts[c], self._starts[c + 1]
                if e > s:
                    ids_parts.append(self._order[s:e])
            if not ids_parts:
                continue
            ids = np.concatenate(ids_parts)
            ids = ids[self.alive[ids]]
            if excl is not None and len(ids):
                ids = ids[~np.isin(ids, excl)]
            if not len(ids):
                continue
            dx = self.coords[ids, 0] - qx
            dy = self.coords[ids, 1] - qy
            d2 = dx * dx + dy * dy
            best_d2 = np.concatenate([best_d2, d2])
            best_id = np.concatenate([best_id, ids])
            if len(best_id) > 0:
                order = np.lexsort((best_id, best_d2))[:k]
                best_d2 = best_d2[order]
                best_id = best_id[order]
                if len(best_id) >= k:
                    kth_d2 = best_d2[-1]
        return best_id

    def _ring_bound(self, qx: float, qy: float, ccx: int, ccy: int, r: int) -> float:
        """Lower bound on the distance from q to any point in ring r (exact pruning)."""
        if r == 0:
            return 0.0
        cell = self._cell
        ix0 = self._lo[0] + (ccx - r + 1) * cell
        ix1 = self._lo[0] + (ccx + r) * cell
        iy0 = self._lo[1] + (ccy - r + 1) * cell
        iy1 = self._lo[1] + (ccy + r) * cell
        if not (ix0 <= qx <= ix1 and iy0 <= qy <= iy1):
            return 0.0
        return max(0.0, min(qx - ix0, ix1 - qx, qy - iy0, iy1 - qy))


class KnnIndex:
    """Facade picking the compiled grid when available, the numpy one otherwise."""

    def __init__(self, engine, n: int):
        self._engine = engine
        self.n = n

    @classmethod
    def build(cls, points, force_python: bool = False) -> "KnnIndex":
        coords = as_coords(points)
        if _backend.has_speedups() and not force_python:
            engine = _backend.speedups.GridIndex(coords)
        else:
            engine = PyGridIndex(coords)
        return cls(engine, len(coords))

    @property
    def alive_count(self) -> int:
        return int(self._engine.alive_count)

    def knn_unvisited(self, query_point, k: int, exclude=()) -> np.ndarray:
        """Up to k nearest alive points to `query_point`, minus `exclude` ids."""
        return np.asarray(self._engine.query(query_point, k, exclude), dtype=np.intp)

    def remove(self, node_id: int) -> None:
        self._engine.remove(node_id)


def brute_force_knn(coords: np.ndarray, point, k: int, alive=None, exclude=()) -> np.ndarray:
    """Reference answer for the index: full scan, same (distance, id) ordering."""
    qx, qy = float(point[0]), float(point[1])
    dx = coords[:, 0] - qx
    dy = coords[:, 1] - qy
    d2 = dx * dx + dy * dy
    ids = np.arange(len(coords))
    mask = np.ones(len(coords), dtype=bool)
    if alive is not None:
        mask &= np.asarray(alive, dtype=bool)
    for e in exclude:
        mask[int(e)] = False
    ids = ids[mask]
    d2 = d2[mask]
    order = np.lexsort((ids, d2))
    return ids[order][:k].astype(np.intp)
