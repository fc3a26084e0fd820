"""Built-in coordinate projection strategies.

Every strategy maps a subgraph matrix (see geometry module layout) to an
equally shaped matrix of projected coordinates. Statistics (minima, maxima,
ranges, offset norms) are computed over the window rows 1..end, i.e. the
anchor row is excluded; that keeps a far-away tour start or depot from
stretching the normalization of the local neighbourhood.

The tsp-prefixed strategies clip into the unit square. The cvrp-prefixed
ones rewrite nodes as depot-relative offsets and do not clip; the depot is
reproduced exactly.

All zero denominators are guarded to 1 so every strategy is total.
"""

from __future__ import annotations

import numpy as np

# expm1 overflow guard; inert for any sane coordinate scale.
EXP_CLAMP = 700.0

# inputs are clamped here so coordinate differences can never overflow to inf
# (inf - inf and inf / inf are the only NaN routes in these formulas)
COORD_GUARD = 1e150


def _window_stats(coords: np.ndarray):
    if coords.ndim != 2 or coords.shape[1] != 2 or len(coords) < 2:
        raise ValueError("projection input must be an (n, 2) matrix with n >= 2")
    coords = np.clip(np.asarray(coords, dtype=np.float64), -COORD_GUARD, COORD_GUARD)
    w = coords[1:]
    return coords, w.min(axis=0), w.max(axis=0)


def _range_scale(wmin: np.ndarray, wmax: np.ndarray) -> tuple[float, bool]:
    r = float(max(wmax[0] - wmin[0], wmax[1] - wmin[1]))
    if r == 0.0:
        return 1.0, True
    return r, False


def project_identity(coords: np.ndarray) -> np.ndarray:
    """No projection; the baseline that leaves raw coordinates untouched."""
    return np.array(coords, dtype=np.float64)


def project_seed(coords: np.ndarray) -> np.ndarray:
    """Shift by the windowed min, divide by the max windowed range, clip.

    Degenerate windows (zero range) get the min added back after the guarded
    division, so the output reduces to the input clipped to the unit square.
    """
    coords, wmin, wmax = _window_stats(coords)
    r, degenerate = _range_scale(wmin, wmax)
    out = (coords - wmin) / r
    if degenerate:
        out = out + wmin
    return np.clip(out, 0.0, 1.0)


def project_tsp1k(coords: np.ndarray) -> np.ndarray:
    """Mirror about the windowed max M, rescale, re-anchor at M, clip."""
    coords, wmin, wmax = _window_stats(coords)
    r, _ = _range_scale(wmin, wmax)
    out = (wmax - coords) / r + wmax
    return np.clip(out, 0.0, 1.0)


def project_tsp5k(coords: np.ndarray) -> np.ndarray:
    """Shift by the windowed min, squash through tanh, divide by the
    pre-tanh max range, clip. Translation invariant by construction."""
    coords, wmin, wmax = _window_stats(coords)
    r, _ = _range_scale(wmin, wmax)
    out = np.tanh(coords - wmin) / r
    return np.clip(out, 0.0, 1.0)


def project_tsp10k(coords: np.ndarray) -> np.ndarray:
    """Center on the windowed midpoint, rescale, recentre at (0.5, 0.5), clip."""
    coords, wmin, wmax = _window_stats(coords)
    r, _ = _range_scale(wmin, wmax)
    out = (coords - (wmax + wmin) / 2.0) / r + 0.5
    return np.clip(out, 0.0, 1.0)


def _depot_offsets(coords: np.ndarray):
    if coords.ndim != 2 or coords.shape[1] != 2 or len(coords) < 2:
        raise ValueError("projection input must be an (n, 2) matrix with n >= 2")
    coords = np.clip(np.asarray(coords, dtype=np.float64), -COORD_GUARD, COORD_GUARD)
    v = coords - coords[0]
    return coords, v, np.hypot(v[:, 0], v[:, 1])


def project_cvrp1k(coords: np.ndarray) -> np.ndarray:
    """Normalize depot offsets to a unit max radius.

    Directions come from a per-row zero-guarded division; the radius scale is
    the raw max offset norm (guarded only when every node sits on the depot),
    so the farthest node always lands at distance 1 from the depot.
    """
    coords, v, norms = _depot_offsets(coords)
    vmax = float(norms.max())
    if vmax == 0.0:
        vmax = 1.0
    g = np.where(norms == 0.0, 1.0, norms)
    vhat = (v / g[:, None]) * (g / vmax)[:, None]
    return coords[0] + vhat


def project_cvrp5k(coords: np.ndarray) -> np.ndarray:
    """Divide depot offsets by the square root of the max offset norm."""
    coords, v, norms = _depot_offsets(coords)
    vmax = float(np.sqrt(norms.max()))
    if vmax == 0.0:
        vmax = 1.0
    return coords[0] + v / vmax


def _project_cvrp_exp(coords: np.ndarray, direction_eps: float) -> np.ndarray:
    coords, v, norms = _depot_offsets(coords)
    amp = np.expm1(np.minimum(norms, EXP_CLAMP))
    amax = float(amp.max())
    if amax == 0.0:
        amax = 1.0
    u = v / (norms + direction_eps)[:, None]
    return coords[0] + (amp / amax)[:, None] * u


def project_cvrp10k(coords: np.ndarray) -> np.ndarray:
    """Exponentially amplified offset magnitudes (expm1 of the norm, normalized
    by their max) along eps-guarded unit directions, eps = 1e-6."""
    return _project_cvrp_exp(coords, 1e-6)


def project_cvrp10k_verbatim(coords: np.ndarray) -> np.ndarray:
    """Variant of cvrp10k with the direction guard constant 1e6: collapses all
    outputs onto the depot at unit-square scales. Kept for comparison runs."""
    return _project_cvrp_exp(coords, 1e6)


BUILTINS = {
    "identity": project_identity,
    "seed": project_seed,
    "tsp1k": project_tsp1k,
    "tsp5k": project_tsp5k,
    "tsp10k": project_tsp10k,
    "cvrp1k": project_cvrp1k,
    "cvrp5k": project_cvrp5k,
    "cvrp10k": project_cvrp10k,
    "cvrp10k-verbatim": project_cvrp10k_verbatim,
}

# numeric codes shared with the compiled kernel
BUILTIN_CODES = {name: i for i, name in enumerate(BUILTINS)}


def lookup(name: str):
    """Projection callable for a built-in name; KeyError lists what exists."""
    try:
        return BUILTINS[name]
    except KeyError:
        raise KeyError(
            f"unknown projection {name!r}; built-ins: {', '.join(sorted(BUILTINS))}"
        ) from None
