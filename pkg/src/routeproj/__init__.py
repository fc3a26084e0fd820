"""Projection-based construction for large TSP / CVRP instances.

The package builds tours autoregressively over k-nearest-neighbour candidate
subgraphs, re-projecting each subgraph's coordinates with a pluggable strategy
before scoring. It also ships multi-view decision fusion, random
re-construction, and an evolutionary search over a small strategy language.
"""

from ._backend import BACKEND, has_speedups
from .construct import (
    InfeasibleInstanceError,
    Solution,
    construct,
    resolve_strategy,
    rrc,
    validate_solution,
)
from .dsl import (
    BUILTIN_PROGRAMS,
    IDENTITY_PROGRAM,
    DslError,
    Program,
    StrategyRecord,
    Step,
    evaluate,
    load_strategy,
    parse,
    save_strategy,
    serialize,
)
from .evolve import EvolutionConfig, EvolutionResult, Individual, run_evolution
from .instances import DISTRIBUTIONS, Instance, generate
from .io import ParseError, read_solution, read_tsplib, write_solution, write_tsplib
from .knn import KnnIndex
from .mvdf import N_VIEWS, VIEW_NAMES, augment, fuse, fused_probabilities
from .policy import DEFAULT_PARAMS, NoFeasibleActionError, PolicyParams, ScoreContext
from .projections import BUILTINS as BUILTIN_PROJECTIONS

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BUILTIN_PROGRAMS",
    "BUILTIN_PROJECTIONS",
    "DEFAULT_PARAMS",
    "DISTRIBUTIONS",
    "DslError",
    "EvolutionConfig",
    "EvolutionResult",
    "IDENTITY_PROGRAM",
    "Individual",
    "InfeasibleInstanceError",
    "Instance",
    "KnnIndex",
    "N_VIEWS",
    "NoFeasibleActionError",
    "ParseError",
    "PolicyParams",
    "Program",
    "ScoreContext",
    "Solution",
    "Step",
    "StrategyRecord",
    "VIEW_NAMES",
    "augment",
    "construct",
    "evaluate",
    "fuse",
    "fused_probabilities",
    "generate",
    "has_speedups",
    "load_strategy",
    "parse",
    "read_solution",
    "read_tsplib",
    "resolve_strategy",
    "rrc",
    "run_evolution",
    "save_strategy",
    "serialize",
    "validate_solution",
    "write_solution",
    "write_tsplib",
    "__version__",
]
