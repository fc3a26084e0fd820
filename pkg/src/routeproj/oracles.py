"""Independent references: exact solvers for tiny instances, classic
heuristics for larger ones, and gap reporting.

Everything here is deliberately plain numpy, disjoint from the construction
hot path, so the two sides of every comparison stay independent.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from .geometry import pairwise_distances, tour_length
from .instances import Instance

HELD_KARP_MAX = 18
BRUTE_CVRP_MAX = 8


def _distance_matrix(coords: np.ndarray, rounded: bool) -> np.ndarray:
    D = pairwise_distances(coords)
    return np.rint(D) if rounded else D


def held_karp(inst: Instance, rounded: bool = False) -> tuple[float, np.ndarray]:
    """Optimal TSP tour by bitmask dynamic programming, n <= 18."""
    coords = inst.coords
    n = len(coords)
    if n > HELD_KARP_MAX:
        raise ValueError(f"held_karp supports n <= {HELD_KARP_MAX}, got {n}")
    if n == 1:
        return 0.0, np.array([0], dtype=np.intp)
    D = _distance_matrix(coords, rounded)
    size = 1 << n
    dp = np.full((size, n), np.inf)
    parent = np.full((size, n), -1, dtype=np.int16)
    for j in range(1, n):
        dp[1 | (1 << j), j] = D[0, j]
    for mask in range(size):
        if not mask & 1:
            continue
        row = dp[mask]
        if not np.isfinite(row).any():
            continue
        candidates = row.copy()
        for j in range(1, n):
            if mask & (1 << j):
                continue
            nxt = mask | (1 << j)
            costs = candidates + D[:, j]
            i = int(np.argmin(costs))
            if costs[i] < dp[nxt, j]:
                dp[nxt, j] = costs[i]
                parent[nxt, j] = i
    full = size - 1
    closing = dp[full] + D[:, 0]
    j = int(np.argmin(closing))
    best = float(closing[j])
    order = [j]
    mask = full
    while parent[mask, j] >= 0:
        i = int(parent[mask, j])
        mask ^= 1 << j
        j = i
        order.append(j)
    order.append(0)  # the base-case predecessor is always the start node
    tour = np.array(order[::-1], dtype=np.intp)
    return best, tour


def brute_force_cvrp(inst: Instance, rounded: bool = False) -> tuple[float, list[np.ndarray]]:
    """Optimal CVRP by enumerating customer permutations with an optimal
    capacity-feasible split per permutation, n_customers <= 8."""
    m = inst.n_customers
    if m > BRUTE_CVRP_MAX:
        raise ValueError(f"brute_force_cvrp supports <= {BRUTE_CVRP_MAX} customers, got {m}")
    if int(inst.demands.max()) > inst.capacity:
        raise ValueError("infeasible instance: a customer demand exceeds the vehicle capacity")
    D = _distance_matrix(inst.coords, rounded)
    customers = list(range(1, m + 1))
    best = np.inf
    best_routes: list[np.ndarray] = []
    cap = inst.capacity
    dem = inst.demands
    for perm in itertools.permutations(customers):
        pref = np.concatenate([[0], np.cumsum([dem[c] for c in perm])])
        # cost[i] = cheapest split of the first i customers into routes
        cost = np.full(m + 1, np.inf)
        cut = np.zeros(m + 1, dtype=np.intp)
        cost[0] = 0.0
        for i in range(1, m + 1):
            run = 0.0  # open-path length perm[j]..perm[i-1]
            for j in range(i - 1, -1, -1):
                if j < i - 1:
                    run += D[perm[j], perm[j + 1]]
                if pref[i] - pref[j] > cap:
                    break
                total = cost[j] + D[0, perm[j]] + run + D[perm[i - 1], 0]
                if total < cost[i]:
                    cost[i] = total
                    cut[i] = j
        if cost[m] < best:
            best = float(cost[m])
            routes = []
            i = m
            while i > 0:
                j = int(cut[i])
                routes.append(np.array(perm[j:i], dtype=np.intp))
                i = j
            best_routes = routes[::-1]
    return best, best_routes


def two_opt(
    inst: Instance,
    tour=None,
    max_passes: int | None = None,
    rounded: bool = False,
    eps: float = 1e-12,
) -> tuple[float, np.ndarray]:
    """First-improvement 2-opt with a fixed (i, then j) scan order.

    Starts from the given tour (default: identity order). Each accepted move
    reverses tour[i..j]; scanning is deterministic, so the result is too.
    """
    coords = inst.coords
    n = len(coords)
    t = np.arange(n, dtype=np.intp) if tour is None else np.array(tour, dtype=np.intp)
    if n < 4:
        return tour_length(coords, t, rounded), t

    def edge(a, b):
        d = np.hypot(coords[a, 0] - coords[b, 0], coords[a, 1] - coords[b, 1])
        return np.rint(d) if rounded else d

    passes = 0
    improved = True
    while improved and (max_passes is None or passes < max_passes):
        improved = False
        passes += 1
        for i in range(1, n - 1):
            a, b = t[i - 1], t[i]
            js = np.arange(i + 1, n)
            cs = t[js]
            ds = t[(js + 1) % n]
            delta = edge(a, cs) + edge(b, ds) - edge(a, b) - edge(cs, ds)
            hit = np.flatnonzero(delta < -eps)
            if len(hit):
                j = int(js[hit[0]])
                t[i : j + 1] = t[i : j + 1][::-1]
                improved = True
    return tour_length(coords, t, rounded), t


def nearest_neighbor(inst: Instance, start: int = 0, rounded: bool = False) -> tuple[float, np.ndarray]:
    """Greedy nearest-unvisited tour; distance ties go to the lower node id."""
    coords = inst.coords
    n = len(coords)
    tour = np.empty(n, dtype=np.intp)
    tour[0] = start
    seen = np.zeros(n, dtype=bool)
    seen[start] = True
    cur = start
    for i in range(1, n):
        d = np.hypot(coords[:, 0] - coords[cur, 0], coords[:, 1] - coords[cur, 1])
        if rounded:
            d = np.rint(d)
        d[seen] = np.inf
        cur = int(np.argmin(d))
        tour[i] = cur
        seen[cur] = True
    return tour_length(coords, tour, rounded), tour


def random_insertion(inst: Instance, seed: int = 0, rounded: bool = False) -> tuple[float, np.ndarray]:
    """Insert nodes in random order at the cheapest position of the partial tour."""
    coords = inst.coords
    n = len(coords)
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    tour = [int(order[0])]
    for x in order[1:]:
        x = int(x)
        arr = np.asarray(tour, dtype=np.intp)
        nxt = np.roll(arr, -1)
        d_ax = np.hypot(coords[arr, 0] - coords[x, 0], coords[arr, 1] - coords[x, 1])
        d_xb = np.hypot(coords[nxt, 0] - coords[x, 0], coords[nxt, 1] - coords[x, 1])
        d_ab = np.hypot(coords[arr, 0] - coords[nxt, 0], coords[arr, 1] - coords[nxt, 1])
        if rounded:
            d_ax, d_xb, d_ab = np.rint(d_ax), np.rint(d_xb), np.rint(d_ab)
        inc = d_ax + d_xb - d_ab
        pos = int(np.argmin(inc))
        tour.insert(pos + 1, x)
    t = np.asarray(tour, dtype=np.intp)
    return tour_length(coords, t, rounded), t


def gap(objective: float, reference: float) -> float:
    """Relative excess over a positive reference: (obj - ref) / ref."""
    if reference <= 0:
        raise ValueError(f"reference must be positive, got {reference}")
    return (objective - reference) / reference


@dataclass
class GapRow:
    name: str
    objective: float
    reference: float | None = None
    seconds: float | None = None

    @property
    def gap(self) -> float | None:
        return None if self.reference is None else gap(self.objective, self.reference)


@dataclass
class GapReport:
    label: str = ""
    rows: list[GapRow] = field(default_factory=list)

    def add(self, name, objective, reference=None, seconds=None) -> GapRow:
        row = GapRow(name, float(objective), None if reference is None else float(reference), seconds)
        self.rows.append(row)
        return row

    def mean_objective(self) -> float:
        return float(np.mean([r.objective for r in self.rows]))

    def mean_gap(self) -> float | None:
        gaps = [r.gap for r in self.rows if r.gap is not None]
        return float(np.mean(gaps)) if gaps else None

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["name", "objective", "reference", "gap_percent", "seconds"])
            for r in self.rows:
                w.writerow([
                    r.name,
                    f"{r.objective:.9f}",
                    "" if r.reference is None else f"{r.reference:.9f}",
                    "" if r.gap is None else f"{100 * r.gap:.4f}",
                    "" if r.seconds is None else f"{r.seconds:.4f}",
                ])

    def format_table(self) -> str:
        head = f"{'instance':<32} {'objective':>14} {'reference':>14} {'gap%':>8} {'sec':>8}"
        lines = [self.label, head, "-" * len(head)] if self.label else [head, "-" * len(head)]
        for r in self.rows:
            ref = f"{r.reference:.4f}" if r.reference is not None else "-"
            g = f"{100 * r.gap:.2f}" if r.gap is not None else "-"
            s = f"{r.seconds:.2f}" if r.seconds is not None else "-"
            lines.append(f"{r.name:<32} {r.objective:>14.4f} {ref:>14} {g:>8} {s:>8}")
        mg = self.mean_gap()
        summary = f"mean objective {self.mean_objective():.4f}"
        if mg is not None:
            summary += f", mean gap {100 * mg:.2f}%"
        lines.append(summary)
        return "\n".join(lines)


class timer:
    """Context manager measuring wall seconds into .seconds."""

    def __enter__(self):
        self._t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self._t0
        return False
