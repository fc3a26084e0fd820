"""Command-line harness.

Subcommands: gen (synthetic instances), solve (construct + optional RRC),
evolve (strategy search), bench (method grid), oracle (references). Exit
codes: 0 success, 1 configuration/usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import _backend, dsl, oracles
from .bench import format_bench_table, method_grid, run_grid, write_bench_csv
from .config import ConfigError, build_config
from .construct import construct, resolve_strategy, rrc
from .evolve import EvolutionConfig, evaluate_fitness, run_evolution, write_history
from .generators import make_generator
from .instances import DISTRIBUTIONS, generate
from .io import (
    ParseError,
    instance_paths,
    read_solution,
    read_tsplib,
    write_manifest,
    write_solution,
    write_tsplib,
)
from .oracles import GapReport


def _load_instances(target):
    paths = instance_paths(target)
    if not paths:
        raise ConfigError(f"no instance files found under {target}")
    out = []
    for p in paths:
        if not Path(p).exists():
            raise ConfigError(f"instance file not found: {p}")
        out.append(read_tsplib(p))
    return out


def _strategy_arg(spec: str):
    """CLI strategy values: built-in name, .json strategy file, or DSL text."""
    if spec.endswith(".json"):
        if not Path(spec).exists():
            raise ConfigError(f"strategy file not found: {spec}")
        return dsl.load_strategy(spec)
    return spec


# ---------------------------------------------------------------- gen

def cmd_gen(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.distributions == "all":
        dists = list(DISTRIBUTIONS)
    else:
        dists = [d.strip() for d in args.distributions.split(",") if d.strip()]
        unknown = [d for d in dists if d not in DISTRIBUTIONS]
        if unknown:
            raise ConfigError(f"unknown distributions: {', '.join(unknown)}")
    entries = []
    suffix = ".tsp" if args.kind == "tsp" else ".vrp"
    for dist in dists:
        for i in range(args.count):
            seed = args.seed + i
            inst = generate(dist, args.n, kind=args.kind, seed=seed, capacity=args.capacity)
            fname = f"{inst.name}{suffix}"
            write_tsplib(out / fname, inst)
            entries.append(
                {
                    "file": fname,
                    "name": inst.name,
                    "kind": inst.kind,
                    "n": args.n,
                    "seed": seed,
                    "distribution": dist,
                    "capacity": inst.capacity,
                }
            )
    write_manifest(
        out / "manifest.json",
        entries,
        settings={"kind": args.kind, "n": args.n, "count": args.count, "base_seed": args.seed},
    )
    print(f"wrote {len(entries)} instances and manifest.json to {out}")
    return 0


# ---------------------------------------------------------------- solve

def _solve_worker(payload):
    inst, strategy, cfg, want_ref = payload
    t0 = time.perf_counter()
    params = cfg.policy_params()
    sol = construct(
        inst,
        strategy=strategy,
        policy=cfg.policy,
        k=cfg.k,
        mvdf=cfg.mvdf,
        select=cfg.select,
        seed=cfg.seed,
        rounded=cfg.tsplib_rounding,
        params=params,
    )
    if cfg.rrc_iterations:
        sol, _ = rrc(
            inst, sol, cfg.rrc_iterations,
            strategy=strategy, policy=cfg.policy, k=cfg.k, mvdf=cfg.mvdf,
            seed=cfg.seed, rounded=cfg.tsplib_rounding, select=cfg.select,
            params=params,
        )
    elapsed = time.perf_counter() - t0
    ref = None
    if want_ref and inst.kind == "tsp":
        ref, _ = oracles.two_opt(inst, rounded=cfg.tsplib_rounding)
    return inst.name, sol, elapsed, ref


def cmd_solve(args) -> int:
    cfg = build_config(
        args.config,
        strategy=args.strategy,
        policy=args.policy,
        k=args.k,
        mvdf=args.mvdf,
        rrc_iterations=args.rrc,
        select=args.select,
        seed=args.seed,
        jobs=args.jobs,
        tsplib_rounding=args.tsplib_rounding,
    )
    instances = _load_instances(args.instances)
    strategy = _strategy_arg(cfg.strategy)
    resolve_strategy(strategy)  # fail fast on bad names
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    want_ref = args.ref == "two-opt"
    payloads = [(inst, strategy, cfg, want_ref) for inst in instances]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_solve_worker, payloads))
    else:
        results = [_solve_worker(p) for p in payloads]
    report = GapReport(label=f"solve: strategy={cfg.strategy} mvdf={cfg.mvdf} rrc={cfg.rrc_iterations}")
    for (inst, _, _, _), (name, sol, elapsed, ref) in zip(payloads, results):
        report.add(name, sol.objective, ref, elapsed)
        if out:
            write_solution(out / f"{name}.sol", inst, sol)
    print(report.format_table())
    if out:
        report.to_csv(out / "report.csv")
    return 0


# ---------------------------------------------------------------- evolve

def cmd_evolve(args) -> int:
    cfg = build_config(
        args.config,
        k=args.k,
        policy=args.policy,
        generator=args.generator,
        population_size=args.population,
        generations=args.generations,
        offspring_per_operator=args.offspring_per_operator,
        seed=args.seed,
        mvdf=args.mvdf,
    )
    instances = _load_instances(args.instances)
    try:
        generator = make_generator(cfg.generator, cfg.seed)
    except (KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    ecfg = EvolutionConfig(
        population_size=cfg.population_size,
        generations=cfg.generations,
        k=cfg.k,
        policy=cfg.policy,
        mvdf=cfg.mvdf,
        offspring_per_operator=cfg.offspring_per_operator,
        seed=cfg.seed,
        rounded=cfg.tsplib_rounding,
        params=cfg.policy_params(),
    )
    result = run_evolution(instances, generator, ecfg, log=lambda msg: print(msg, file=sys.stderr))
    best = result.best
    print(f"best fitness {best.fitness:.6f} program: {best.source or '<identity>'}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        record = dsl.StrategyRecord(
            name=f"evolved-{instances[0].kind}",
            description=best.description,
            source=best.source,
            created_by=best.created_by,
            fitness=best.fitness,
        )
        dsl.save_strategy(out / "best_strategy.json", record)
        write_history(out / "history.csv", result.history)
        print(f"wrote best_strategy.json and history.csv to {out}")
    if args.transfer:
        transfer = _load_instances(args.transfer)
        for label, program in (("evolved", best.program), ("seed", dsl.builtin_program("seed"))):
            fit = evaluate_fitness(program, transfer, ecfg)
            print(f"transfer {label}: mean objective {-fit:.4f}")
    return 0


# ---------------------------------------------------------------- bench

def cmd_bench(args) -> int:
    cfg = build_config(
        args.config,
        k=args.k,
        policy=args.policy,
        seed=args.seed,
        tsplib_rounding=args.tsplib_rounding,
    )
    instances = _load_instances(args.instances)
    strategies = []
    for item in args.strategies.split(","):
        item = item.strip()
        if not item:
            continue
        spec = _strategy_arg(item)
        resolve_strategy(spec)
        label = Path(item).stem if item.endswith(".json") else item
        strategies.append((label, spec))
    if not strategies:
        raise ConfigError("no strategies given")
    mvdf_modes = {"off": [False], "on": [True], "both": [False, True]}[args.mvdf]
    try:
        budgets = [int(b) for b in args.rrc.split(",")]
    except ValueError:
        raise ConfigError(f"--rrc wants a comma list of integers, got {args.rrc!r}") from None
    methods = method_grid(strategies, mvdf_modes, budgets)
    references = None
    if args.ref == "two-opt":
        references = [oracles.two_opt(inst, rounded=cfg.tsplib_rounding)[0] for inst in instances]
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    rows = run_grid(
        instances, methods, k=cfg.k, policy=cfg.policy, seed=cfg.seed,
        rounded=cfg.tsplib_rounding, out_dir=out, references=references,
        log=lambda msg: print(msg, file=sys.stderr), params=cfg.policy_params(),
    )
    print(format_bench_table(rows))
    if out:
        write_bench_csv(out / "bench.csv", rows)
    return 0


# ---------------------------------------------------------------- oracle

_ORACLE_METHODS = ("held-karp", "brute-cvrp", "two-opt", "nearest-neighbor", "random-insertion")


def _oracle_objective(method, inst, seed, rounded):
    if method == "held-karp":
        if inst.kind != "tsp":
            raise ConfigError("held-karp applies to TSP instances")
        return oracles.held_karp(inst, rounded)[0]
    if method == "brute-cvrp":
        if inst.kind != "cvrp":
            raise ConfigError("brute-cvrp applies to CVRP instances")
        return oracles.brute_force_cvrp(inst, rounded)[0]
    if inst.kind != "tsp":
        raise ConfigError(f"{method} applies to TSP instances")
    if method == "two-opt":
        return oracles.two_opt(inst, rounded=rounded)[0]
    if method == "nearest-neighbor":
        return oracles.nearest_neighbor(inst, rounded=rounded)[0]
    return oracles.random_insertion(inst, seed=seed, rounded=rounded)[0]


def cmd_oracle(args) -> int:
    instances = _load_instances(args.instances)
    report = GapReport(label=f"oracle: {args.method}")
    for inst in instances:
        with oracles.timer() as t:
            ref = _oracle_objective(args.method, inst, args.seed, args.tsplib_rounding)
        if args.solutions:
            sol_path = Path(args.solutions) / f"{inst.name}.sol"
            if not sol_path.exists():
                raise ConfigError(f"no solution file for {inst.name} under {args.solutions}")
            sol = read_solution(sol_path, inst, rounded=args.tsplib_rounding)
            report.add(inst.name, sol.objective, ref, t.seconds)
        else:
            report.add(inst.name, ref, None, t.seconds)
    print(report.format_table())
    if args.out:
        report.to_csv(args.out)
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="routeproj",
        description=f"projection-based routing constructor (backend: {_backend.BACKEND})",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate synthetic instances")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--kind", choices=("tsp", "cvrp"), default="tsp")
    p.add_argument("--n", type=int, required=True, help="nodes (TSP) or customers (CVRP)")
    p.add_argument("--count", type=int, default=16, help="instances per distribution")
    p.add_argument("--distributions", default="all", help="comma list or 'all'")
    p.add_argument("--seed", type=int, default=0, help="base seed; instance i uses seed+i")
    p.add_argument("--capacity", type=int, default=None, help="override CVRP capacity")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", help="construct (and optionally improve) solutions")
    p.add_argument("--instances", required=True, help="instance file, directory, or manifest")
    p.add_argument("--out", default=None, help="directory for .sol files and report.csv")
    p.add_argument("--config", default=None, help="flat key=value config file")
    p.add_argument("--strategy", default=None, help="built-in name, .json strategy, or program text")
    p.add_argument("--policy", default=None, choices=("scale_sensitive", "isometry_invariant"))
    p.add_argument("--k", type=int, default=None, help="candidate neighbourhood size")
    p.add_argument("--mvdf", action="store_const", const=True, default=None, help="fuse the 8 views")
    p.add_argument("--rrc", type=int, default=None, help="random re-construction iterations")
    p.add_argument("--select", default=None, choices=("argmax", "sample"))
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None, help="parallel instances")
    p.add_argument("--ref", choices=("none", "two-opt"), default="none", help="gap reference")
    p.add_argument("--tsplib-rounding", action="store_const", const=True, default=None,
                   help="nearest-integer edge costs")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("evolve", help="evolve a projection strategy")
    p.add_argument("--instances", required=True, help="evaluation instances")
    p.add_argument("--out", default=None, help="directory for best_strategy.json and history.csv")
    p.add_argument("--config", default=None)
    p.add_argument("--generator", default=None, choices=("mock", "llm"))
    p.add_argument("--population", type=int, default=None)
    p.add_argument("--generations", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--policy", default=None, choices=("scale_sensitive", "isometry_invariant"))
    p.add_argument("--mvdf", action="store_const", const=True, default=None)
    p.add_argument("--offspring-per-operator", action="store_const", const=True, default=None,
                   help="every operator contributes population-size offspring per generation")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--transfer", default=None, help="evaluate the winner on these instances too")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("bench", help="compare methods on an instance set")
    p.add_argument("--instances", required=True)
    p.add_argument("--out", default=None, help="directory for bench.csv and cached solutions")
    p.add_argument("--config", default=None)
    p.add_argument("--strategies", default="identity,seed", help="comma list of strategies")
    p.add_argument("--mvdf", choices=("off", "on", "both"), default="off")
    p.add_argument("--rrc", default="0", help="comma list of RRC budgets")
    p.add_argument("--ref", choices=("none", "two-opt"), default="none")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--policy", default=None, choices=("scale_sensitive", "isometry_invariant"))
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--tsplib-rounding", action="store_const", const=True, default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("oracle", help="exact/baseline references and gap reports")
    p.add_argument("--instances", required=True)
    p.add_argument("--method", choices=_ORACLE_METHODS, required=True)
    p.add_argument("--solutions", default=None, help="directory of .sol files to gap against")
    p.add_argument("--out", default=None, help="write the report CSV here")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tsplib-rounding", action="store_true")
    p.set_defaults(func=cmd_oracle)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyError as exc:
        print(f"error: {exc.args[0] if exc.args else exc}", file=sys.stderr)
        return 1
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
