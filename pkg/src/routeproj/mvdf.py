"""Multi-view decision fusion.

The unit square has eight distance-preserving symmetries; running the policy
once per transformed view and summing the logits before the softmax averages
away whatever the policy reads off raw positions (for any point, the eight
view images of each coordinate sum to the constant 4). Distances are
unchanged by every view, so the distance-driven part of the score passes
through fusion intact.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .policy import NoFeasibleActionError, ScoreContext

# fixed view order; (a, b) means x' = a, y' = b in terms of x/y/1-x/1-y
VIEW_NAMES = (
    "(x, y)",
    "(y, x)",
    "(x, 1-y)",
    "(y, 1-x)",
    "(1-x, y)",
    "(1-y, x)",
    "(1-x, 1-y)",
    "(1-y, 1-x)",
)
N_VIEWS = 8


def augment(coords: np.ndarray) -> np.ndarray:
    """Stack of the 8 views of an (n, 2) matrix, shape (8, n, 2), fixed order."""
    x = coords[:, 0]
    y = coords[:, 1]
    out = np.empty((N_VIEWS, len(coords), 2), dtype=np.float64)
    pairs = ((x, y), (y, x), (x, 1 - y), (y, 1 - x), (1 - x, y), (1 - y, x), (1 - x, 1 - y), (1 - y, 1 - x))
    for i, (a, b) in enumerate(pairs):
        out[i, :, 0] = a
        out[i, :, 1] = b
    return out


def fuse(logit_stack: np.ndarray) -> np.ndarray:
    """softmax over the per-action sum of a (views, actions) logit stack.

    Masked actions (-inf in every row where masked at all: masks are
    view-independent) come out with probability exactly 0. All actions
    masked is an error.
    """
    stack = np.asarray(logit_stack, dtype=np.float64)
    if stack.ndim != 2:
        raise ValueError("expected a (views, actions) logit stack")
    total = stack.sum(axis=0)
    finite = np.isfinite(total)
    if not finite.any():
        raise NoFeasibleActionError("all actions are masked")
    z = total - total[finite].max()
    p = np.where(finite, np.exp(np.where(finite, z, 0.0)), 0.0)
    return p / p.sum()


def fused_probabilities(ctx: ScoreContext, score_fn) -> np.ndarray:
    """Score all 8 views of ctx.coords and fuse into one action distribution."""
    views = augment(ctx.coords)
    stack = np.stack([score_fn(replace(ctx, coords=v)) for v in views])
    return fuse(stack)
