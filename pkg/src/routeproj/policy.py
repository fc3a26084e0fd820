"""Surrogate scoring policies standing in for a learned constructor.

Both policies score candidate continuations of a walk from a projected
subgraph matrix. The scale-sensitive one is deliberately tuned to unit-square
inputs: its exponential pull toward the current node (sigma 0.1) flattens out
when coordinates keep their raw scale, and its small positional tilt
(w3 x + w4 y) injects an asymmetry that view fusion can cancel. That is what
makes projection quality and multi-view fusion measurable without a neural
policy. The isometry-invariant one is a pure nearest-neighbour control.

CVRP logit vectors carry one extra trailing slot for the "return to depot"
action. Candidates whose demand exceeds the remaining capacity are masked to
-inf, as is the depot slot while the walk already sits on the depot (an empty
route is never a valid action).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PolicyParams:
    w1: float = 4.0
    w2: float = -1.0
    w3: float = 0.05
    w4: float = 0.05
    sigma1: float = 0.1
    sigma2: float = 0.5
    w5: float = 2.0

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.w1, self.w2, self.w3, self.w4, self.sigma1, self.sigma2, self.w5]
        )


DEFAULT_PARAMS = PolicyParams()


class NoFeasibleActionError(RuntimeError):
    pass


@dataclass
class ScoreContext:
    """Inputs a policy needs for one decision.

    coords is the projected subgraph [anchor | candidates | current]; for CVRP
    the anchor row is the depot. Capacity fields are unused for TSP.
    """

    coords: np.ndarray
    kind: str = "tsp"
    remaining_fraction: float = 1.0
    demand_fractions: np.ndarray | None = None
    depot_allowed: bool = True

    def n_candidates(self) -> int:
        return len(self.coords) - 2


def _distances(ctx: ScoreContext):
    cands = ctx.coords[1:-1]
    last = ctx.coords[-1]
    first = ctx.coords[0]
    d_last = np.hypot(cands[:, 0] - last[0], cands[:, 1] - last[1])
    d_first = np.hypot(cands[:, 0] - first[0], cands[:, 1] - first[1])
    return cands, d_last, d_first


def _cvrp_finish(ctx: ScoreContext, cand_logits: np.ndarray, depot_logit: float) -> np.ndarray:
    if ctx.demand_fractions is None:
        raise ValueError("CVRP scoring needs candidate demand fractions")
    cand_logits = np.where(
        np.asarray(ctx.demand_fractions) > ctx.remaining_fraction, -np.inf, cand_logits
    )
    if not ctx.depot_allowed:
        depot_logit = -np.inf
    return np.concatenate([cand_logits, [depot_logit]])


def score_scale_sensitive(ctx: ScoreContext, params: PolicyParams = DEFAULT_PARAMS) -> np.ndarray:
    """w1 e^{-d(last,c)/s1} + w2 e^{-d(c,first)/s2} + w3 x + w4 y per candidate;
    CVRP adds a depot slot scored w5 (1 - remaining capacity fraction)."""
    cands, d_last, d_first = _distances(ctx)
    logits = (
        params.w1 * np.exp(-d_last / params.sigma1)
        + params.w2 * np.exp(-d_first / params.sigma2)
        + params.w3 * cands[:, 0]
        + params.w4 * cands[:, 1]
    )
    if ctx.kind == "tsp":
        return logits
    return _cvrp_finish(ctx, logits, params.w5 * (1.0 - ctx.remaining_fraction))


def score_isometry_invariant(ctx: ScoreContext, params: PolicyParams = DEFAULT_PARAMS) -> np.ndarray:
    """Pure negated distance to the current node; depends only on the metric,
    so any isometry of the input leaves the scores unchanged."""
    _, d_last, _ = _distances(ctx)
    logits = -d_last
    if ctx.kind == "tsp":
        return logits
    depot = ctx.coords[0]
    last = ctx.coords[-1]
    return _cvrp_finish(ctx, logits, -float(np.hypot(depot[0] - last[0], depot[1] - last[1])))


POLICIES = {
    "scale_sensitive": score_scale_sensitive,
    "isometry_invariant": score_isometry_invariant,
}

# numeric codes shared with the compiled kernel
POLICY_CODES = {"scale_sensitive": 0, "isometry_invariant": 1}


def lookup(name: str):
    try:
        return POLICIES[name]
    except KeyError:
        raise KeyError(
            f"unknown policy {name!r}; available: {', '.join(sorted(POLICIES))}"
        ) from None


def select_argmax(logits: np.ndarray) -> int:
    """Index of the max logit; ties go to the lowest index; all -inf is an error."""
    logits = np.asarray(logits, dtype=np.float64)
    if len(logits) == 0:
        raise NoFeasibleActionError("no actions to select from")
    i = int(np.argmax(logits))
    if logits[i] == -np.inf:
        raise NoFeasibleActionError("all actions are masked")
    return i


def select_sample(logits: np.ndarray, rng: np.random.Generator) -> int:
    """Diagnostic sampling mode: draw from softmax(logits)."""
    logits = np.asarray(logits, dtype=np.float64)
    finite = np.isfinite(logits)
    if not finite.any():
        raise NoFeasibleActionError("all actions are masked")
    z = logits - logits[finite].max()
    p = np.where(finite, np.exp(z), 0.0)
    p /= p.sum()
    return int(rng.choice(len(p), p=p))
