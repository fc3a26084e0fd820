"""Timing comparison of the compiled construction core vs the numpy fallback.

Run from the repository root:

    python benchmarks/bench_backends.py [--sizes 1000,5000,10000] [--k 100]

Each row times one full greedy construction (seed projection, scale-sensitive
policy, argmax) per backend on the same instance and reports the speedup. The
two backends must produce identical tours; the benchmark asserts that too.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from routeproj import _backend, instances
from routeproj.construct import construct
from routeproj.knn import KnnIndex


def time_construct(inst, force_python: bool, **kw) -> tuple[float, object]:
    t0 = time.perf_counter()
    sol = construct(inst, force_python=force_python, **kw)
    return time.perf_counter() - t0, sol


def bench_knn(n: int, queries: int, k: int) -> tuple[float, float]:
    rng = np.random.default_rng(0)
    coords = rng.uniform(0, 1, (n, 2))
    pts = rng.uniform(0, 1, (queries, 2))
    out = []
    for force in (False, True):
        idx = KnnIndex.build(coords, force_python=force)
        t0 = time.perf_counter()
        for q in pts:
            idx.knn_unvisited(q, k)
        out.append(time.perf_counter() - t0)
    return out[0], out[1]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="1000,2000,5000,10000")
    ap.add_argument("--k", type=int, default=100)
    ap.add_argument("--mvdf", action="store_true", help="also time the fused variant")
    args = ap.parse_args()

    if not _backend.has_speedups():
        raise SystemExit("compiled extension not available; nothing to compare")

    sizes = [int(s) for s in args.sizes.split(",")]
    print(f"{'case':<24} {'compiled':>10} {'python':>10} {'speedup':>8}")
    for n in sizes:
        inst = instances.generate("uniform", n, kind="tsp", seed=0)
        variants = [("tsp seed", {})]
        if args.mvdf:
            variants.append(("tsp seed mvdf", {"mvdf": True}))
        for label, kw in variants:
            tc, fast = time_construct(inst, False, k=args.k, **kw)
            tp, slow = time_construct(inst, True, k=args.k, **kw)
            assert np.array_equal(fast.tour, slow.tour), "backend results diverged"
            print(f"{label + f' n={n}':<24} {tc:>9.3f}s {tp:>9.3f}s {tp / tc:>7.1f}x")

        cinst = instances.generate("uniform", n, kind="cvrp", seed=0)
        tc, fast = time_construct(cinst, False, strategy="cvrp1k", k=args.k)
        tp, slow = time_construct(cinst, True, strategy="cvrp1k", k=args.k)
        assert fast.objective == slow.objective
        print(f"{f'cvrp cvrp1k n={n}':<24} {tc:>9.3f}s {tp:>9.3f}s {tp / tc:>7.1f}x")

    tc, tp = bench_knn(20000, 2000, args.k)
    print(f"{'knn 2000q n=20000':<24} {tc:>9.3f}s {tp:>9.3f}s {tp / tc:>7.1f}x")


if __name__ == "__main__":
    main()
