"""A tiny transform language for projection strategies.

Programs are semicolon-separated statements applied left to right to a
subgraph matrix (geometry module layout: [anchor | candidates | current]):

    program  := stmt (";" stmt)*          (the empty program is the identity)
    stmt     := "window" ("all" | "exclude_first")
              | "translate" anchor
              | "mirror" anchor
              | "scale" ("range_max" | "norm_max" | "sqrt_norm_max" | "const" NUMBER)
              | "map" ("tanh" | "expm1" | "identity")
              | "add" (anchor | NUMBER NUMBER)
              | "clip_unit"
    anchor   := "min" | "max" | "mid" | "centroid" | "first" | "last" | "depot"

Step semantics (state = the working coordinate matrix, initially the input):

    window w          set the statistics window: "all" rows (default) or all
                      but the first ("exclude_first").
    translate a       subtract anchor point a, computed from the CURRENT state.
    mirror a          reflect: state <- a - state, a from the CURRENT state.
    scale range_max   divide by the larger per-axis range of the ORIGINAL
                      input's window (the raw subgraph extent), zero -> 1.
    scale norm_max    divide by the max row norm over the CURRENT window
                      (offset magnitudes, meaningful after a translate), 0 -> 1.
    scale sqrt_norm_max  as norm_max but divide by its square root, 0 -> 1.
    scale const c     divide by the nonzero constant c.
    map tanh          elementwise tanh.
    map expm1         radial amplification: each row is rescaled along its
                      eps-guarded unit direction (eps = 1e-6) to magnitude
                      expm1(|row|) / max_window expm1(|row|), max zero -> 1.
    map identity      no-op.
    add x y           add the constant vector (x, y).
    add a             re-add anchor point a of the ORIGINAL input (restores a
                      reference landmark after mirror/scale steps).
    clip_unit         clip into the unit square.

    anchors: min/max/mid/centroid are per-axis statistics over the window
    rows; first and depot are row 0, last is the final row.

The split between ORIGINAL-input and CURRENT-state statistics is what the
built-in strategies need: range scaling normalizes by the raw neighbourhood
extent even after a mirror or tanh, while norm scaling measures the offsets a
translate just produced. Evaluation is total: denominators are zero-guarded,
expm1 arguments are clamped, and every intermediate is clamped to +-1e18, so
any program yields finite output for finite input.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .projections import EXP_CLAMP

ANCHORS = ("min", "max", "mid", "centroid", "first", "last", "depot")
SCALE_MODES = ("range_max", "norm_max", "sqrt_norm_max", "const")
MAP_MODES = ("tanh", "expm1", "identity")
WINDOW_MODES = ("all", "exclude_first")

COORD_LIMIT = 1e18
MAX_STEPS = 12
DIRECTION_EPS = 1e-6


class DslError(ValueError):
    """Parse or validation failure; `position` is the 1-based statement index."""

    def __init__(self, message: str, position: int | None = None):
        if position is not None:
            message = f"statement {position}: {message}"
        super().__init__(message)
        self.position = position


def _format_num(x: float) -> str:
    return repr(float(x))


@dataclass(frozen=True)
class Step:
    op: str
    mode: str | None = None
    nums: tuple[float, ...] = ()

    def text(self) -> str:
        parts = [self.op]
        # add spells its literal form without the internal "const" marker
        if self.mode is not None and not (self.op == "add" and self.mode == "const"):
            parts.append(self.mode)
        parts.extend(_format_num(v) for v in self.nums)
        return " ".join(parts)


@dataclass(frozen=True)
class Program:
    steps: tuple[Step, ...] = ()

    @property
    def source(self) -> str:
        """Canonical text: lowercase statements joined by '; '."""
        return "; ".join(s.text() for s in self.steps)

    def __len__(self) -> int:
        return len(self.steps)


IDENTITY_PROGRAM = Program(())


def _parse_number(tok: str, pos: int) -> float:
    try:
        val = float(tok)
    except ValueError:
        raise DslError(f"expected a number, got {tok!r}", pos) from None
    if not math.isfinite(val):
        raise DslError(f"numbers must be finite, got {tok!r}", pos)
    return val


def parse(text: str) -> Program:
    """Parse program text. Whitespace-only input is the identity program."""
    if not isinstance(text, str):
        raise DslError(f"program source must be a string, got {type(text).__name__}")
    steps: list[Step] = []
    statements = [s for s in (part.strip() for part in text.lower().split(";"))]
    if all(s == "" for s in statements):
        return IDENTITY_PROGRAM
    for pos, stmt in enumerate(statements, start=1):
        if not stmt:
            raise DslError("empty statement", pos)
        toks = re.split(r"\s+", stmt)
        op, args = toks[0], toks[1:]
        if op == "window":
            if len(args) != 1 or args[0] not in WINDOW_MODES:
                raise DslError(f"window takes one of {WINDOW_MODES}", pos)
            steps.append(Step("window", args[0]))
        elif op in ("translate", "mirror"):
            if len(args) != 1 or args[0] not in ANCHORS:
                raise DslError(f"{op} takes an anchor from {ANCHORS}", pos)
            steps.append(Step(op, args[0]))
        elif op == "scale":
            if not args or args[0] not in SCALE_MODES:
                raise DslError(f"scale takes one of {SCALE_MODES}", pos)
            if args[0] == "const":
                if len(args) != 2:
                    raise DslError("scale const takes exactly one number", pos)
                c = _parse_number(args[1], pos)
                if c == 0.0:
                    raise DslError("scale const 0 is not allowed", pos)
                steps.append(Step("scale", "const", (c,)))
            else:
                if len(args) != 1:
                    raise DslError(f"scale {args[0]} takes no arguments", pos)
                steps.append(Step("scale", args[0]))
        elif op == "map":
            if len(args) != 1 or args[0] not in MAP_MODES:
                raise DslError(f"map takes one of {MAP_MODES}", pos)
            steps.append(Step("map", args[0]))
        elif op == "add":
            if len(args) == 1 and args[0] in ANCHORS:
                steps.append(Step("add", args[0]))
            elif len(args) == 2:
                x = _parse_number(args[0], pos)
                y = _parse_number(args[1], pos)
                steps.append(Step("add", "const", (x, y)))
            else:
                raise DslError("add takes an anchor or two numbers", pos)
        elif op == "clip_unit":
            if args:
                raise DslError("clip_unit takes no arguments", pos)
            steps.append(Step("clip_unit"))
        else:
            raise DslError(f"unknown operation {op!r}", pos)
    if len(steps) > MAX_STEPS:
        raise DslError(f"programs are limited to {MAX_STEPS} statements")
    return Program(tuple(steps))


def serialize(program: Program) -> str:
    """Canonical text form; parse(serialize(p)) == p."""
    return program.source


def _anchor_point(mat: np.ndarray, window_mode: str, name: str) -> np.ndarray:
    if name in ("first", "depot"):
        return mat[0]
    if name == "last":
        return mat[-1]
    w = mat[1:] if window_mode == "exclude_first" else mat
    if name == "min":
        return w.min(axis=0)
    if name == "max":
        return w.max(axis=0)
    if name == "mid":
        return (w.min(axis=0) + w.max(axis=0)) / 2.0
    return w.mean(axis=0)  # centroid


def _window(mat: np.ndarray, window_mode: str) -> np.ndarray:
    return mat[1:] if window_mode == "exclude_first" else mat


def evaluate(program: Program, coords: np.ndarray) -> np.ndarray:
    """Run a program over a subgraph matrix; always returns finite output."""
    state = np.asarray(coords, dtype=np.float64)
    if state.ndim != 2 or state.shape[1] != 2 or len(state) < 2:
        raise ValueError("program input must be an (n, 2) matrix with n >= 2")
    original = state.copy()
    state = state.copy()
    window_mode = "all"
    for step in program.steps:
        if step.op == "window":
            window_mode = step.mode
            continue
        if step.op == "translate":
            state = state - _anchor_point(state, window_mode, step.mode)
        elif step.op == "mirror":
            state = _anchor_point(state, window_mode, step.mode) - state
        elif step.op == "scale":
            if step.mode == "range_max":
                w = _window(original, window_mode)
                r = float(max(w[:, 0].max() - w[:, 0].min(), w[:, 1].max() - w[:, 1].min()))
            elif step.mode == "const":
                r = step.nums[0]
            else:
                w = _window(state, window_mode)
                r = float(np.hypot(w[:, 0], w[:, 1]).max())
                if step.mode == "sqrt_norm_max":
                    r = math.sqrt(r)
            if r == 0.0:
                r = 1.0
            state = state / r
        elif step.op == "map":
            if step.mode == "tanh":
                state = np.tanh(state)
            elif step.mode == "expm1":
                norms = np.hypot(state[:, 0], state[:, 1])
                amp = np.expm1(np.minimum(norms, EXP_CLAMP))
                amax = float(_window(amp[:, None], window_mode).max())
                if amax == 0.0:
                    amax = 1.0
                ratio = np.minimum(amp / amax, COORD_LIMIT)
                state = state / (norms + DIRECTION_EPS)[:, None] * ratio[:, None]
        elif step.op == "add":
            if step.mode == "const":
                state = state + np.asarray(step.nums)
            else:
                state = state + _anchor_point(original, window_mode, step.mode)
        elif step.op == "clip_unit":
            state = np.clip(state, 0.0, 1.0)
        state = np.clip(state, -COORD_LIMIT, COORD_LIMIT)
    return state


def as_projection(program: Program):
    """Wrap a program as a plain coords -> coords callable."""
    return lambda coords: evaluate(program, coords)


# DSL spellings of the built-in strategies. The seed encoding matches the
# built-in on every window with a nonzero range (the built-in's degenerate
# branch re-adds the window min, which no program step reproduces).
BUILTIN_PROGRAMS = {
    "seed": "window exclude_first; translate min; scale range_max; clip_unit",
    "tsp1k": "window exclude_first; mirror max; scale range_max; add max; clip_unit",
    "tsp5k": "window exclude_first; translate min; map tanh; scale range_max; clip_unit",
    "tsp10k": "window exclude_first; translate mid; scale range_max; add 0.5 0.5; clip_unit",
    "cvrp1k": "translate depot; scale norm_max; add depot",
    "cvrp5k": "translate depot; scale sqrt_norm_max; add depot",
    "cvrp10k": "translate depot; map expm1; add depot",
}


def builtin_program(name: str) -> Program:
    try:
        return parse(BUILTIN_PROGRAMS[name])
    except KeyError:
        raise KeyError(
            f"no DSL spelling for {name!r}; available: {', '.join(sorted(BUILTIN_PROGRAMS))}"
        ) from None


# ---------------------------------------------------------------------------
# random generation and mutation (the mock strategy generator builds on these)

def _random_step(rng: np.random.Generator) -> Step:
    kind = rng.integers(0, 6)
    if kind == 0:
        return Step("translate", ANCHORS[rng.integers(0, len(ANCHORS))])
    if kind == 1:
        return Step("mirror", ANCHORS[rng.integers(0, len(ANCHORS))])
    if kind == 2:
        mode = SCALE_MODES[rng.integers(0, len(SCALE_MODES))]
        if mode == "const":
            return Step("scale", "const", (round(float(rng.uniform(0.25, 4.0)), 6),))
        return Step("scale", mode)
    if kind == 3:
        return Step("map", MAP_MODES[rng.integers(0, len(MAP_MODES))])
    if kind == 4:
        if rng.random() < 0.5:
            return Step("add", ANCHORS[rng.integers(0, len(ANCHORS))])
        return Step(
            "add",
            "const",
            (round(float(rng.uniform(-1, 1)), 6), round(float(rng.uniform(-1, 1)), 6)),
        )
    return Step("clip_unit")


def random_program(rng: np.random.Generator) -> Program:
    steps: list[Step] = []
    if rng.random() < 0.5:
        steps.append(Step("window", WINDOW_MODES[rng.integers(0, 2)]))
    for _ in range(int(rng.integers(2, 6))):
        steps.append(_random_step(rng))
    return Program(tuple(steps))


def crossover(a: Program, b: Program, rng: np.random.Generator) -> Program:
    """One-point splice; every output step comes from a parent."""
    i = int(rng.integers(0, len(a.steps) + 1))
    j = int(rng.integers(0, len(b.steps) + 1))
    return Program((a.steps[:i] + b.steps[j:])[:MAX_STEPS])


def replace_step(p: Program, rng: np.random.Generator) -> Program:
    if not p.steps:
        return random_program(rng)
    i = int(rng.integers(0, len(p.steps)))
    steps = list(p.steps)
    steps[i] = _random_step(rng)
    return Program(tuple(steps))


def perturb_consts(p: Program, rng: np.random.Generator) -> Program:
    """Multiply every numeric constant by a factor drawn from [0.5, 2.0]."""
    steps = []
    for s in p.steps:
        if s.nums:
            nums = tuple(v * float(rng.uniform(0.5, 2.0)) for v in s.nums)
            steps.append(Step(s.op, s.mode, nums))
        else:
            steps.append(s)
    return Program(tuple(steps))


MUTATION_OPS = ("fresh", "crossover", "replace_step", "perturb_consts")


def mutate(op: str, parents: list[Program], rng: np.random.Generator) -> Program:
    """Apply a mutation operator; drafts failing revalidation are retried and
    the identity program is the final fallback."""
    if op not in MUTATION_OPS:
        raise ValueError(f"unknown mutation operator {op!r}; known: {MUTATION_OPS}")
    for _ in range(8):
        if op == "fresh":
            draft = random_program(rng)
        elif op == "crossover":
            if len(parents) < 2:
                raise ValueError("crossover needs two parents")
            draft = crossover(parents[0], parents[1], rng)
        elif op == "replace_step":
            draft = replace_step(parents[0], rng)
        else:
            draft = perturb_consts(parents[0], rng)
        try:
            return parse(serialize(draft))
        except DslError:
            continue
    return IDENTITY_PROGRAM


# ---------------------------------------------------------------------------
# strategy files: named, documented programs persisted as JSON

@dataclass
class StrategyRecord:
    name: str
    description: str
    source: str
    created_by: str
    fitness: float | None = None
    program: Program = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.program = parse(self.source)


def save_strategy(path, record: StrategyRecord) -> None:
    payload = {
        "name": record.name,
        "description": record.description,
        "source": serialize(record.program),
        "created_by": record.created_by,
    }
    if record.fitness is not None:
        payload["fitness"] = record.fitness
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def load_strategy(path) -> StrategyRecord:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(payload, dict):
        raise ValueError(f"{path}: expected a JSON object")
    for key in ("name", "description", "source", "created_by"):
        if key not in payload:
            raise ValueError(f"{path}: missing required key {key!r}")
    return StrategyRecord(
        name=str(payload["name"]),
        description=str(payload["description"]),
        source=str(payload["source"]),
        created_by=str(payload["created_by"]),
        fitness=payload.get("fitness"),
    )
