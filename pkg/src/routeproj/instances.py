"""Problem instances and the four synthetic spatial distributions.

All generators are deterministic in (seed, parameters): random draws happen
in a fixed documented order (depot, then customer/node coordinates, then any
distribution-specific values, then demands). Coordinates live in the unit
square. For CVRP the depot is row 0 and is always drawn uniformly; `n` counts
customers, so the coordinate matrix has n+1 rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import as_coords

DISTRIBUTIONS = ("uniform", "clustered", "explosion", "implosion")
DEMAND_LOW, DEMAND_HIGH = 1, 9


def default_capacity(n_customers: int) -> int:
    return 200 if n_customers <= 1000 else 300


@dataclass
class Instance:
    name: str
    kind: str  # "tsp" | "cvrp"
    coords: np.ndarray
    demands: np.ndarray | None = None  # per node, 0 for the depot row
    capacity: int | None = None
    distribution: str = "file"

    def __post_init__(self):
        self.coords = as_coords(self.coords)
        if self.kind not in ("tsp", "cvrp"):
            raise ValueError(f"kind must be tsp or cvrp, got {self.kind!r}")
        if self.kind == "tsp":
            if self.demands is not None or self.capacity is not None:
                raise ValueError("TSP instances carry no demands or capacity")
            if len(self.coords) < 1:
                raise ValueError("TSP needs at least 1 node")
        else:
            if self.demands is None or self.capacity is None:
                raise ValueError("CVRP instances need demands and a capacity")
            self.demands = np.asarray(self.demands, dtype=np.int64)
            if len(self.demands) != len(self.coords):
                raise ValueError("one demand per node required")
            if self.demands[0] != 0:
                raise ValueError("depot demand must be 0")
            if len(self.coords) < 2:
                raise ValueError("CVRP needs a depot and at least one customer")
            if (self.demands[1:] < 1).any():
                raise ValueError("customer demands must be >= 1")
            if int(self.capacity) <= 0:
                raise ValueError("capacity must be positive")
            self.capacity = int(self.capacity)

    @property
    def n(self) -> int:
        """Total node count (depot included for CVRP)."""
        return len(self.coords)

    @property
    def n_customers(self) -> int:
        return len(self.coords) - 1 if self.kind == "cvrp" else len(self.coords)


def _finish(name, kind, coords, distribution, rng, capacity):
    if kind == "tsp":
        return Instance(name, "tsp", coords, distribution=distribution)
    n = len(coords) - 1
    demands = np.concatenate([[0], rng.integers(DEMAND_LOW, DEMAND_HIGH + 1, n)])
    cap = default_capacity(n) if capacity is None else int(capacity)
    return Instance(name, "cvrp", coords, demands, cap, distribution)


def _base_points(kind: str, n: int, rng) -> tuple[np.ndarray | None, int]:
    """CVRP gets a uniform depot first; returns (depot_or_None, body count)."""
    if kind == "cvrp":
        return rng.uniform(0.0, 1.0, 2), n
    return None, n


def _assemble(depot, body):
    return np.vstack([depot, body]) if depot is not None else body


def _name(kind, distribution, n, seed):
    return f"{kind}-{distribution}-n{n}-s{seed}"


def gen_uniform(n: int, kind: str = "tsp", seed: int = 0, capacity: int | None = None) -> Instance:
    rng = np.random.default_rng(seed)
    depot, m = _base_points(kind, n, rng)
    body = rng.uniform(0.0, 1.0, (m, 2))
    coords = _assemble(depot, body)
    return _finish(_name(kind, "uniform", n, seed), kind, coords, "uniform", rng, capacity)


def gen_clustered(
    n: int,
    kind: str = "tsp",
    seed: int = 0,
    capacity: int | None = None,
    n_clusters_range: tuple[int, int] = (3, 8),
    center_box: tuple[float, float] = (0.2, 0.8),
    sigma: float = 0.05,
) -> Instance:
    """Gaussian blobs around uniformly placed centers, clipped to the square."""
    rng = np.random.default_rng(seed)
    depot, m = _base_points(kind, n, rng)
    c = int(rng.integers(n_clusters_range[0], n_clusters_range[1] + 1))
    centers = rng.uniform(center_box[0], center_box[1], (c, 2))
    assign = rng.integers(0, c, m)
    body = np.clip(centers[assign] + rng.normal(0.0, sigma, (m, 2)), 0.0, 1.0)
    coords = _assemble(depot, body)
    return _finish(_name(kind, "clustered", n, seed), kind, coords, "clustered", rng, capacity)


def _ray_exit_t(center: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Per ray, how far one can travel from center before leaving the square."""
    t = np.full(len(dirs), np.inf)
    for axis in range(2):
        d = dirs[:, axis]
        pos = d > 0
        neg = d < 0
        t[pos] = np.minimum(t[pos], (1.0 - center[axis]) / d[pos])
        t[neg] = np.minimum(t[neg], (0.0 - center[axis]) / d[neg])
    return t


def gen_explosion(
    n: int,
    kind: str = "tsp",
    seed: int = 0,
    capacity: int | None = None,
    radius: float = 0.3,
    offset_scale: float | None = None,
) -> Instance:
    """Uniform points with a disc blasted empty: interior points are pushed to
    the boundary plus an exponential offset, clipped along their ray so the
    square stays honoured without re-entering the disc. The center is drawn in
    [radius, 1-radius]^2 so every ray has at least `radius` of room."""
    if offset_scale is None:
        offset_scale = 0.1 * radius
    rng = np.random.default_rng(seed)
    depot, m = _base_points(kind, n, rng)
    body = rng.uniform(0.0, 1.0, (m, 2))
    center = rng.uniform(radius, 1.0 - radius, 2)
    rel = body - center
    dist = np.hypot(rel[:, 0], rel[:, 1])
    inside = dist < radius
    if inside.any():
        offs = rng.exponential(offset_scale, int(inside.sum()))
        rel_in = rel[inside]
        d_in = dist[inside]
        dirs = np.where(d_in[:, None] > 0, rel_in / np.where(d_in == 0, 1.0, d_in)[:, None], [1.0, 0.0])
        t_max = _ray_exit_t(center, dirs)
        new_r = np.minimum(radius + offs, t_max)
        body[inside] = center + dirs * new_r[:, None]
    coords = _assemble(depot, body)
    return _finish(_name(kind, "explosion", n, seed), kind, coords, "explosion", rng, capacity)


def gen_implosion(
    n: int,
    kind: str = "tsp",
    seed: int = 0,
    capacity: int | None = None,
    radius: float = 0.3,
    factor: float = 0.3,
) -> Instance:
    """Uniform points with a disc's interior contracted toward its center."""
    rng = np.random.default_rng(seed)
    depot, m = _base_points(kind, n, rng)
    body = rng.uniform(0.0, 1.0, (m, 2))
    center = rng.uniform(0.0, 1.0, 2)
    rel = body - center
    dist = np.hypot(rel[:, 0], rel[:, 1])
    inside = dist < radius
    body[inside] = center + factor * rel[inside]
    coords = _assemble(depot, body)
    return _finish(_name(kind, "implosion", n, seed), kind, coords, "implosion", rng, capacity)


GENERATORS = {
    "uniform": gen_uniform,
    "clustered": gen_clustered,
    "explosion": gen_explosion,
    "implosion": gen_implosion,
}


def generate(distribution: str, n: int, kind: str = "tsp", seed: int = 0, capacity: int | None = None, **params) -> Instance:
    try:
        fn = GENERATORS[distribution]
    except KeyError:
        raise KeyError(
            f"unknown distribution {distribution!r}; available: {', '.join(DISTRIBUTIONS)}"
        ) from None
    return fn(n, kind=kind, seed=seed, capacity=capacity, **params)
