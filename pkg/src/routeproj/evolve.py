"""Evolutionary search over projection programs.

A fixed-size population of programs is scored by fitness = -mean(objective)
over an evaluation set (bigger is better). Parents are drawn with replacement
under the halving rank rule: the individual at rank r (1 = best) is chosen
with probability 2^-r / sum_j 2^-j. Each generation asks the generator for
offspring, cycling the operators E1, E2, M1, M2; failures (unparseable or
unavailable replies) are counted and skipped. Survivor selection is elitist
truncation after deduplication by canonical program text, so the best fitness
can never decline, and the hand-written normalizer is injected into the
initial population as a safety floor.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import dsl
from .construct import construct
from .generators import OPERATORS, GeneratorError
from .policy import PolicyParams

SEED_DESCRIPTION = (
    "shift by the window minimum, divide by the larger windowed range, clip to the unit square"
)


@dataclass
class Individual:
    program: dsl.Program
    description: str
    created_by: str
    fitness: float | None = None

    @property
    def source(self) -> str:
        return self.program.source


@dataclass
class EvolutionConfig:
    population_size: int = 20
    generations: int = 105
    k: int = 100
    policy: str = "scale_sensitive"
    mvdf: bool = False
    offspring_per_operator: bool = False
    seed: int = 0
    rounded: bool = False
    force_python: bool = False
    params: PolicyParams | None = None

    def validate(self) -> None:
        if self.population_size < 1:
            raise ValueError("population_size must be >= 1")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass
class HistoryRow:
    generation: int
    best_fitness: float
    mean_fitness: float
    n_failures: int


@dataclass
class EvolutionResult:
    population: list
    best: Individual
    history: list
    n_failures: int = 0


def rank_selection_probs(n: int) -> np.ndarray:
    """P(rank r) = 2^-r / sum, r = 1..n over a fitness-sorted population."""
    if n < 1:
        raise ValueError("need at least one individual")
    w = 0.5 ** np.arange(1, n + 1)
    return w / w.sum()


def select_parents(population: list, count: int, rng: np.random.Generator) -> list:
    """Draw `count` parents with replacement, rank-weighted. Population must
    already be sorted best first."""
    probs = rank_selection_probs(len(population))
    idx = rng.choice(len(population), size=count, replace=True, p=probs)
    return [population[int(i)] for i in idx]


def evaluate_fitness(program: dsl.Program, eval_set, cfg: EvolutionConfig) -> float:
    """fitness = -mean(objective) over the evaluation instances."""
    objs = [
        construct(
            inst,
            strategy=program,
            policy=cfg.policy,
            k=cfg.k,
            mvdf=cfg.mvdf,
            rounded=cfg.rounded,
            force_python=cfg.force_python,
            params=cfg.params,
        ).objective
        for inst in eval_set
    ]
    return -float(np.mean(objs))


def _sorted_population(population: list) -> list:
    order = sorted(range(len(population)), key=lambda i: (-population[i].fitness, i))
    return [population[i] for i in order]


def _record(history: list, generation: int, population: list, failures: int) -> None:
    fits = [ind.fitness for ind in population]
    history.append(HistoryRow(generation, float(max(fits)), float(np.mean(fits)), failures))


def write_history(path, history: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["generation", "best_fitness", "mean_fitness", "n_failures"])
        for row in history:
            w.writerow([row.generation, repr(float(row.best_fitness)), repr(float(row.mean_fitness)), row.n_failures])


def run_evolution(eval_set, generator, cfg: EvolutionConfig, log=None) -> EvolutionResult:
    """Full search loop; deterministic for a fixed (generator seed, cfg.seed)."""
    cfg.validate()
    if not eval_set:
        raise ValueError("evaluation set is empty")
    rng = np.random.default_rng(cfg.seed)
    history: list[HistoryRow] = []
    total_failures = 0

    seed_ind = Individual(dsl.builtin_program("seed"), SEED_DESCRIPTION, "seed")
    seed_ind.fitness = evaluate_fitness(seed_ind.program, eval_set, cfg)
    population = [seed_ind]
    seen = {seed_ind.source}

    failures = 0
    attempts = 0
    slot = 0
    while len(population) < cfg.population_size and attempts < 10 * cfg.population_size:
        attempts += 1
        parents = [(ind.description, ind.source) for ind in select_parents(population, 2, rng)]
        try:
            desc, source = generator.generate("E1", parents, 0, slot)
            program = dsl.parse(source)
        except (GeneratorError, dsl.DslError):
            failures += 1
            slot += 1
            continue
        slot += 1
        if program.source in seen:
            continue
        ind = Individual(program, desc, getattr(generator, "name", "unknown"))
        ind.fitness = evaluate_fitness(program, eval_set, cfg)
        population.append(ind)
        seen.add(ind.source)
    population = _sorted_population(population)
    _record(history, 0, population, failures)
    total_failures += failures
    if log:
        log(f"generation 0: best {history[-1].best_fitness:.6f} population {len(population)}")

    for gen in range(1, cfg.generations + 1):
        failures = 0
        if cfg.offspring_per_operator:
            plan = [op for op in OPERATORS for _ in range(cfg.population_size)]
        else:
            plan = [OPERATORS[s % len(OPERATORS)] for s in range(cfg.population_size)]
        newcomers = []
        for slot, op in enumerate(plan):
            parents = select_parents(population, 2, rng)
            parent_payload = [(p.description, p.source) for p in parents]
            try:
                desc, source = generator.generate(op, parent_payload, gen, slot)
                program = dsl.parse(source)
            except (GeneratorError, dsl.DslError):
                failures += 1
                continue
            if program.source in seen:
                continue
            ind = Individual(program, desc, getattr(generator, "name", "unknown"))
            ind.fitness = evaluate_fitness(program, eval_set, cfg)
            newcomers.append(ind)
            seen.add(ind.source)
        population = _sorted_population(population + newcomers)[: cfg.population_size]
        _record(history, gen, population, failures)
        total_failures += failures
        if log:
            log(
                f"generation {gen}: best {history[-1].best_fitness:.6f} "
                f"mean {history[-1].mean_fitness:.6f} failures {failures}"
            )

    return EvolutionResult(population, population[0], history, total_failures)
