"""Benchmark grid: (strategy, fusion, re-construction budget) over instances.

Solutions are cached as files under the output directory; cached entries are
re-read and re-verified against the instance rather than recomputed, so a
tampered cache fails instead of silently polluting the table.
"""

from __future__ import annotations

import csv
import re
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .construct import construct, rrc
from .io import read_solution, write_solution
from .oracles import gap


@dataclass
class MethodSpec:
    label: str
    strategy: object
    mvdf: bool = False
    rrc_iterations: int = 0


def method_grid(strategies, mvdf_modes, rrc_budgets) -> list[MethodSpec]:
    specs = []
    for name, strategy in strategies:
        for m in mvdf_modes:
            for budget in rrc_budgets:
                label = name + ("+mvdf" if m else "") + (f"+rrc{budget}" if budget else "")
                specs.append(MethodSpec(label, strategy, m, budget))
    return specs


def _safe(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", label)


def run_method(inst, spec: MethodSpec, k, policy, seed, rounded, params=None):
    t0 = time.perf_counter()
    sol = construct(
        inst, strategy=spec.strategy, policy=policy, k=k, mvdf=spec.mvdf,
        rounded=rounded, params=params,
    )
    if spec.rrc_iterations:
        sol, _ = rrc(
            inst, sol, spec.rrc_iterations,
            strategy=spec.strategy, policy=policy, k=k, mvdf=spec.mvdf,
            seed=seed, rounded=rounded, params=params,
        )
    return sol, time.perf_counter() - t0


def run_grid(
    instances, methods, k=100, policy="scale_sensitive", seed=0, rounded=False,
    out_dir=None, references=None, log=None, params=None,
):
    """Returns one row per method: label, per-instance objectives, mean, mean gap."""
    out_dir = Path(out_dir) if out_dir else None
    rows = []
    for spec in methods:
        objs = []
        secs = []
        for inst in instances:
            sol = None
            elapsed = None
            if out_dir:
                cache = out_dir / "solutions" / _safe(spec.label) / f"{inst.name}.sol"
                if cache.exists():
                    sol = read_solution(cache, inst, rounded=rounded)
            if sol is None:
                sol, elapsed = run_method(inst, spec, k, policy, seed, rounded, params)
                if out_dir:
                    cache = out_dir / "solutions" / _safe(spec.label) / f"{inst.name}.sol"
                    cache.parent.mkdir(parents=True, exist_ok=True)
                    write_solution(cache, inst, sol)
            objs.append(sol.objective)
            secs.append(elapsed)
        mean_obj = float(np.mean(objs))
        row = {
            "label": spec.label,
            "objectives": objs,
            "mean_objective": mean_obj,
            "mean_seconds": (
                float(np.mean([s for s in secs if s is not None]))
                if any(s is not None for s in secs)
                else None
            ),
            "mean_gap": None,
        }
        if references is not None:
            gaps = [gap(o, r) for o, r in zip(objs, references)]
            row["mean_gap"] = float(np.mean(gaps))
        rows.append(row)
        if log:
            log(f"{spec.label}: mean objective {mean_obj:.4f}")
    return rows


def write_bench_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "mean_objective", "mean_gap_percent", "mean_seconds"])
        for r in rows:
            w.writerow([
                r["label"],
                f"{r['mean_objective']:.9f}",
                "" if r["mean_gap"] is None else f"{100 * r['mean_gap']:.4f}",
                "" if r["mean_seconds"] is None else f"{r['mean_seconds']:.4f}",
            ])


def format_bench_table(rows) -> str:
    head = f"{'method':<32} {'mean objective':>16} {'mean gap%':>10} {'sec/inst':>10}"
    lines = [head, "-" * len(head)]
    for r in rows:
        g = "-" if r["mean_gap"] is None else f"{100 * r['mean_gap']:.2f}"
        s = "-" if r["mean_seconds"] is None else f"{r['mean_seconds']:.2f}"
        lines.append(f"{r['label']:<32} {r['mean_objective']:>16.4f} {g:>10} {s:>10}")
    return "\n".join(lines)
