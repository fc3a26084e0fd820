"""KNN-restricted autoregressive construction and random re-construction.

Each step looks at the current node's k nearest unvisited neighbours only,
projects the little subgraph [anchor | candidates | current] through the
active strategy, scores the candidates with the policy (optionally fused over
the 8 unit-square views) and commits the argmax. CVRP runs the same loop with
the depot as anchor row, capacity masking, and a trailing "return to depot"
action that closes the route and resets capacity.

Random re-construction (RRC) repeatedly rips out a random contiguous chunk of
the solution (a tour arc, or a span inside one CVRP route), rebuilds it with
the very same projection + policy greedy restricted to the removed nodes, and
keeps the result only when the objective does not increase.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend, dsl, projections
from . import policy as policy_mod
from .geometry import path_length, subgraph_matrix, tour_length
from .instances import Instance
from .knn import KnnIndex
from .mvdf import fused_probabilities
from .policy import ScoreContext, select_argmax, select_sample


class InfeasibleInstanceError(ValueError):
    pass


@dataclass
class Solution:
    kind: str
    objective: float
    tour: np.ndarray | None = None
    routes: list | None = None
    feasible: bool = True

    def visit_count(self) -> int:
        if self.kind == "tsp":
            return len(self.tour)
        return sum(len(r) for r in self.routes)


@dataclass
class Strategy:
    """Resolved projection strategy: a built-in, a DSL program, or a callable."""

    name: str
    fn: object  # coords -> coords
    builtin: str | None = None
    program: dsl.Program | None = None

    @property
    def kernel_ready(self) -> bool:
        return self.builtin is not None or self.program is not None


def resolve_strategy(spec) -> Strategy:
    """Accepts a built-in name, DSL source text, Program, StrategyRecord or callable."""
    if isinstance(spec, Strategy):
        return spec
    if isinstance(spec, dsl.StrategyRecord):
        return Strategy(spec.name, dsl.as_projection(spec.program), program=spec.program)
    if isinstance(spec, dsl.Program):
        return Strategy(spec.source or "identity-program", dsl.as_projection(spec), program=spec)
    if callable(spec):
        return Strategy(getattr(spec, "__name__", "custom"), spec)
    if isinstance(spec, str):
        if spec in projections.BUILTINS:
            return Strategy(spec, projections.BUILTINS[spec], builtin=spec)
        try:
            prog = dsl.parse(spec)
        except dsl.DslError:
            raise KeyError(
                f"{spec!r} is neither a built-in projection "
                f"({', '.join(sorted(projections.BUILTINS))}) nor valid program text"
            ) from None
        return Strategy(prog.source or "identity-program", dsl.as_projection(prog), program=prog)
    raise TypeError(f"cannot resolve a strategy from {type(spec).__name__}")


def resolve_policy(spec, params=None):
    """Returns (builtin_name_or_None, score_fn). Non-default constants are
    bound into the returned scorer for built-in policies."""
    if isinstance(spec, str):
        fn = policy_mod.lookup(spec)
        if params is not None:
            base, p = fn, params
            fn = lambda ctx: base(ctx, p)  # noqa: E731
        return spec, fn
    if callable(spec):
        return None, spec
    raise TypeError(f"cannot resolve a policy from {type(spec).__name__}")


def _pick(ctx: ScoreContext, score_fn, mvdf: bool, rng, select: str) -> int:
    if mvdf:
        probs = fused_probabilities(ctx, score_fn)
        if select == "argmax":
            return select_argmax(np.where(probs > 0, probs, -np.inf))
        return int(rng.choice(len(probs), p=probs))
    logits = score_fn(ctx)
    if select == "argmax":
        return select_argmax(logits)
    return select_sample(logits, rng)


def _construct_tsp_python(inst, strategy, score_fn, k, mvdf, select, rng, force_python):
    coords = inst.coords
    n = len(coords)
    if n == 1:
        return np.array([0], dtype=np.intp)
    index = KnnIndex.build(coords, force_python=force_python)
    index.remove(0)
    tour = np.empty(n, dtype=np.intp)
    tour[0] = 0
    current = 0
    first = 0
    for step in range(1, n):
        cands = index.knn_unvisited(coords[current], k)
        sub = subgraph_matrix(coords, first, cands, current)
        proj = strategy.fn(sub)
        ctx = ScoreContext(proj, "tsp")
        j = _pick(ctx, score_fn, mvdf, rng, select)
        node = int(cands[j])
        tour[step] = node
        index.remove(node)
        current = node
    return tour


def _construct_cvrp_python(inst, strategy, score_fn, k, mvdf, select, rng, force_python):
    coords = inst.coords
    demands = inst.demands
    cap = inst.capacity
    index = KnnIndex.build(coords, force_python=force_python)
    index.remove(0)
    routes: list[list[int]] = []
    route: list[int] = []
    current = 0
    remaining = cap
    left = inst.n_customers
    while left > 0:
        cands = index.knn_unvisited(coords[current], k)
        sub = subgraph_matrix(coords, 0, cands, current)
        proj = strategy.fn(sub)
        ctx = ScoreContext(
            proj,
            "cvrp",
            remaining_fraction=remaining / cap,
            demand_fractions=demands[cands] / cap,
            depot_allowed=current != 0,
        )
        j = _pick(ctx, score_fn, mvdf, rng, select)
        if j == len(cands):
            routes.append(route)
            route = []
            current = 0
            remaining = cap
        else:
            node = int(cands[j])
            route.append(node)
            remaining -= int(demands[node])
            index.remove(node)
            current = node
            left -= 1
    if route:
        routes.append(route)
    return [np.asarray(r, dtype=np.intp) for r in routes]


def cvrp_objective(coords: np.ndarray, routes, rounded: bool = False) -> float:
    total = 0.0
    for r in routes:
        total += tour_length(coords, np.concatenate([[0], r]), rounded)
    return total


def _kernel_eligible(strategy: Strategy, policy_name, mvdf, select) -> bool:
    return (
        _backend.has_speedups()
        and strategy.kernel_ready
        and policy_name in policy_mod.POLICY_CODES
        and select == "argmax"
    )


def _kernel_strategy_spec(strategy: Strategy):
    if strategy.builtin is not None:
        return projections.BUILTIN_CODES[strategy.builtin], None, None
    ops, args = _backend.speedups.compile_program_steps(
        [(s.op, s.mode, s.nums) for s in strategy.program.steps]
    )
    return -1, ops, args


def construct(
    inst: Instance,
    strategy="seed",
    policy="scale_sensitive",
    k: int = 100,
    mvdf: bool = False,
    select: str = "argmax",
    seed: int = 0,
    rounded: bool = False,
    force_python: bool = False,
    params: policy_mod.PolicyParams | None = None,
) -> Solution:
    """Build one solution. Deterministic for select="argmax"; the seed only
    matters for the diagnostic sampling mode."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if select not in ("argmax", "sample"):
        raise ValueError("select must be argmax or sample")
    strategy = resolve_strategy(strategy)
    policy_name, score_fn = resolve_policy(policy, params)
    params_arr = (params or policy_mod.DEFAULT_PARAMS).as_array()
    rng = np.random.default_rng(seed)
    if inst.kind == "cvrp" and int(inst.demands.max()) > inst.capacity:
        raise InfeasibleInstanceError(
            "infeasible instance: a customer demand exceeds the vehicle capacity"
        )

    use_kernel = not force_python and _kernel_eligible(strategy, policy_name, mvdf, select)
    if inst.kind == "tsp":
        if use_kernel and inst.n > 1:
            code, ops, args = _kernel_strategy_spec(strategy)
            tour = _backend.speedups.construct_tsp(
                inst.coords,
                k,
                code,
                ops,
                args,
                policy_mod.POLICY_CODES[policy_name],
                params_arr,
                1 if mvdf else 0,
            )
            tour = np.asarray(tour, dtype=np.intp)
        else:
            tour = _construct_tsp_python(inst, strategy, score_fn, k, mvdf, select, rng, force_python)
        return Solution("tsp", tour_length(inst.coords, tour, rounded), tour=tour)

    if use_kernel:
        code, ops, args = _kernel_strategy_spec(strategy)
        flat = _backend.speedups.construct_cvrp(
            inst.coords,
            np.asarray(inst.demands, dtype=np.int64),
            inst.capacity,
            k,
            code,
            ops,
            args,
            policy_mod.POLICY_CODES[policy_name],
            params_arr,
            1 if mvdf else 0,
        )
        routes = _split_flat_routes(np.asarray(flat, dtype=np.intp))
    else:
        routes = _construct_cvrp_python(inst, strategy, score_fn, k, mvdf, select, rng, force_python)
    return Solution("cvrp", cvrp_objective(inst.coords, routes, rounded), routes=routes)


def _split_flat_routes(flat: np.ndarray) -> list:
    """Kernel encodes routes as customer ids separated by -1."""
    routes = []
    cur: list[int] = []
    for v in flat:
        if v == -1:
            if cur:
                routes.append(np.asarray(cur, dtype=np.intp))
            cur = []
        else:
            cur.append(int(v))
    if cur:
        routes.append(np.asarray(cur, dtype=np.intp))
    return routes


def validate_solution(inst: Instance, sol: Solution, tol: float = 1e-6, rounded: bool = False) -> None:
    """Raise when a solution is not a valid answer for the instance."""
    if sol.kind != inst.kind:
        raise ValueError(f"solution kind {sol.kind} does not match instance kind {inst.kind}")
    if inst.kind == "tsp":
        tour = np.asarray(sol.tour)
        if sorted(tour.tolist()) != list(range(inst.n)):
            raise ValueError("tour is not a permutation of the nodes")
        expected = tour_length(inst.coords, tour, rounded)
    else:
        seen: list[int] = []
        for r in sol.routes:
            if len(r) == 0:
                raise ValueError("empty route")
            seen.extend(int(v) for v in r)
            if int(inst.demands[np.asarray(r)].sum()) > inst.capacity:
                raise ValueError("route exceeds vehicle capacity")
        if sorted(seen) != list(range(1, inst.n)):
            raise ValueError("routes do not visit each customer exactly once")
        expected = cvrp_objective(inst.coords, sol.routes, rounded)
    if abs(expected - sol.objective) > tol:
        raise ValueError(
            f"stored objective {sol.objective} does not match recomputation {expected}"
        )


# ---------------------------------------------------------------------------
# random re-construction

def _rebuild_segment(
    coords, seg_nodes, left_xy, right_xy, kind, strategy, score_fn, k, mvdf, rng, select,
    demands=None, capacity=None, remaining=None,
):
    """Greedy path over seg_nodes from left_xy, anchored on right_xy (TSP) or
    the depot row (CVRP). Returns the nodes in visit order."""
    seg_nodes = np.asarray(seg_nodes, dtype=np.intp)
    if len(seg_nodes) == 1:
        return seg_nodes
    local = KnnIndex.build(coords[seg_nodes], force_python=True)
    order = np.empty(len(seg_nodes), dtype=np.intp)
    cur_xy = left_xy
    for step in range(len(seg_nodes)):
        cands = local.knn_unvisited(cur_xy, min(k, len(seg_nodes)))
        sub = np.empty((len(cands) + 2, 2), dtype=np.float64)
        sub[0] = right_xy
        sub[1:-1] = coords[seg_nodes[cands]]
        sub[-1] = cur_xy
        proj = strategy.fn(sub)
        if kind == "tsp":
            ctx = ScoreContext(proj, "tsp")
        else:
            ctx = ScoreContext(
                proj,
                "cvrp",
                remaining_fraction=remaining / capacity,
                demand_fractions=demands[seg_nodes[cands]] / capacity,
                depot_allowed=False,
            )
        j = _pick(ctx, score_fn, mvdf, rng, select)
        if ctx.kind == "cvrp" and j == len(cands):  # depot slot masked, cannot happen
            raise AssertionError("depot selected during segment rebuild")
        node = int(cands[j])
        order[step] = seg_nodes[node]
        local.remove(node)
        cur_xy = coords[seg_nodes[node]]
        if kind == "cvrp":
            remaining -= int(demands[seg_nodes[node]])
    return order


def rrc(
    inst: Instance,
    sol: Solution,
    iterations: int,
    strategy="seed",
    policy="scale_sensitive",
    k: int = 100,
    mvdf: bool = False,
    seed: int = 0,
    rounded: bool = False,
    select: str = "argmax",
    params: policy_mod.PolicyParams | None = None,
) -> tuple[Solution, list[float]]:
    """Improve a solution in place of its copy; returns (solution, history).

    history[0] is the input objective and one entry is appended per iteration,
    so the sequence is non-increasing by construction (a rebuilt segment is
    spliced back only when the objective does not grow).
    """
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    strategy = resolve_strategy(strategy)
    _, score_fn = resolve_policy(policy, params)
    rng = np.random.default_rng(seed)
    coords = inst.coords
    history = [sol.objective]
    obj = sol.objective

    if inst.kind == "tsp":
        tour = np.array(sol.tour, dtype=np.intp)
        n = len(tour)
        for _ in range(iterations):
            L = int(rng.integers(4, min(1000, n) + 1))
            start = int(rng.integers(0, n))
            L = min(L, n - 1)
            if L < 2:
                history.append(obj)
                continue
            pos = (start + np.arange(L)) % n
            seg = tour[pos]
            left = tour[(start - 1) % n]
            right = tour[(start + L) % n]
            old_len = path_length(coords, np.concatenate([[left], seg, [right]]), rounded)
            new_seg = _rebuild_segment(
                coords, seg, coords[left], coords[right], "tsp",
                strategy, score_fn, k, mvdf, rng, select,
            )
            new_len = path_length(coords, np.concatenate([[left], new_seg, [right]]), rounded)
            if new_len <= old_len:
                tour[pos] = new_seg
                obj += new_len - old_len
            history.append(obj)
        final = Solution("tsp", tour_length(coords, tour, rounded), tour=tour)
        return final, history

    routes = [np.array(r, dtype=np.intp) for r in sol.routes]
    demands = inst.demands
    for _ in range(iterations):
        L = int(rng.integers(4, min(1000, inst.n) + 1))
        eligible = [i for i, r in enumerate(routes) if len(r) >= 2]
        if not eligible:
            history.append(obj)
            continue
        ridx = eligible[int(rng.integers(0, len(eligible)))]
        route = routes[ridx]
        L = min(L, len(route))
        start = int(rng.integers(0, len(route) - L + 1))
        seg = route[start:start + L]
        left_xy = coords[route[start - 1]] if start > 0 else coords[0]
        right_node = route[start + L] if start + L < len(route) else 0
        right_xy = coords[right_node]
        prefix_ids = route[:start]
        remaining = inst.capacity - int(demands[prefix_ids].sum()) if len(prefix_ids) else inst.capacity
        left_node = route[start - 1] if start > 0 else 0
        old_len = path_length(coords, np.concatenate([[left_node], seg, [right_node]]), rounded)
        new_seg = _rebuild_segment(
            coords, seg, left_xy, right_xy, "cvrp",
            strategy, score_fn, k, mvdf, rng, select,
            demands=demands, capacity=inst.capacity, remaining=remaining,
        )
        new_len = path_length(coords, np.concatenate([[left_node], new_seg, [right_node]]), rounded)
        if new_len <= old_len:
            route = route.copy()
            route[start:start + L] = new_seg
            routes[ridx] = route
            obj += new_len - old_len
        history.append(obj)
    final = Solution("cvrp", cvrp_objective(coords, routes, rounded), routes=routes)
    return final, history
