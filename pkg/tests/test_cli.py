import csv
import json

import numpy as np
import pytest

from routeproj import dsl
from routeproj.cli import main
from routeproj.config import ConfigError, build_config, load_config_file
from routeproj.io import read_manifest, read_solution, read_tsplib
from routeproj.instances import generate


def run(*argv):
    return main(list(argv))


@pytest.fixture
def tsp_dir(tmp_path):
    d = tmp_path / "tsp"
    code = run(
        "gen", "--out", str(d), "--kind", "tsp", "--n", "24",
        "--count", "2", "--distributions", "uniform", "--seed", "3",
    )
    assert code == 0
    return d


@pytest.fixture
def cvrp_dir(tmp_path):
    d = tmp_path / "cvrp"
    assert run(
        "gen", "--out", str(d), "--kind", "cvrp", "--n", "7",
        "--count", "2", "--distributions", "uniform",
    ) == 0
    return d


# ------------------------------------------------------------------------ gen

def test_gen_writes_instances_and_manifest(tmp_path, capsys):
    d = tmp_path / "out"
    code = run(
        "gen", "--out", str(d), "--kind", "cvrp", "--n", "15",
        "--count", "3", "--distributions", "uniform,clustered", "--seed", "7",
    )
    assert code == 0
    assert "wrote 6 instances" in capsys.readouterr().out
    payload = read_manifest(d / "manifest.json")
    assert len(payload["instances"]) == 6
    assert payload["settings"]["base_seed"] == 7
    entry = payload["instances"][0]
    assert entry["seed"] == 7 and entry["distribution"] == "uniform"
    inst = read_tsplib(d / entry["file"])
    assert inst.kind == "cvrp" and inst.n == 16


def test_gen_rejects_unknown_distribution(tmp_path, capsys):
    assert run("gen", "--out", str(tmp_path / "x"), "--n", "5",
               "--distributions", "spiral") == 1
    assert "unknown distributions" in capsys.readouterr().err


def test_usage_errors_exit_1(capsys):
    assert run() == 1
    assert run("solve") == 1  # missing --instances
    assert run("frobnicate") == 1


def test_help_exits_0(capsys):
    assert run("--help") == 0
    assert "gen" in capsys.readouterr().out


# ---------------------------------------------------------------------- solve

def test_solve_writes_solutions_and_report(tsp_dir, tmp_path, capsys):
    out = tmp_path / "sols"
    code = run(
        "solve", "--instances", str(tsp_dir), "--out", str(out),
        "--strategy", "seed", "--k", "8", "--seed", "1",
    )
    assert code == 0
    table = capsys.readouterr().out
    assert "strategy=seed" in table
    payload = read_manifest(tsp_dir / "manifest.json")
    for entry in payload["instances"]:
        sol_path = out / f"{entry['name']}.sol"
        assert sol_path.exists()
        inst = read_tsplib(tsp_dir / entry["file"])
        read_solution(sol_path, inst)  # validates objective and tour
    with open(out / "report.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2


def test_solve_accepts_manifest_rrc_and_reference(tsp_dir, tmp_path, capsys):
    code = run(
        "solve", "--instances", str(tsp_dir / "manifest.json"),
        "--strategy", "identity", "--k", "6", "--rrc", "10", "--ref", "two-opt",
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "rrc=10" in out
    assert "mean gap" in out


def test_solve_parallel_jobs_match_serial(tsp_dir, tmp_path):
    a, b = tmp_path / "serial", tmp_path / "parallel"
    assert run("solve", "--instances", str(tsp_dir), "--out", str(a), "--k", "8") == 0
    assert run("solve", "--instances", str(tsp_dir), "--out", str(b),
               "--k", "8", "--jobs", "2") == 0
    for sol in sorted(p.name for p in a.glob("*.sol")):
        assert (a / sol).read_text() == (b / sol).read_text()


def test_solve_with_strategy_file_and_cvrp(cvrp_dir, tmp_path):
    strat = tmp_path / "strat.json"
    dsl.save_strategy(
        strat,
        dsl.StrategyRecord(
            name="shift", description="center on the depot",
            source="translate depot; scale norm_max; add depot", created_by="test",
        ),
    )
    assert run("solve", "--instances", str(cvrp_dir), "--strategy", str(strat),
               "--k", "5") == 0


def test_solve_error_exits(tmp_path, tsp_dir, capsys):
    assert run("solve", "--instances", str(tmp_path / "missing")) == 1
    assert run("solve", "--instances", str(tsp_dir), "--strategy", "warp9") == 1
    assert run("solve", "--instances", str(tsp_dir),
               "--strategy", str(tmp_path / "nope.json")) == 1
    err = capsys.readouterr().err
    assert "warp9" in err


def test_corrupt_instance_file_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.tsp"
    bad.write_text("TYPE : TSP\nDIMENSION : 2\nEDGE_WEIGHT_TYPE : EUC_2D\n"
                   "NODE_COORD_SECTION\n1 zero zero\n2 1 1\nEOF\n")
    assert run("solve", "--instances", str(bad)) == 2
    assert "bad.tsp:5" in capsys.readouterr().err


# --------------------------------------------------------------------- config

def test_config_file_layering(tmp_path, tsp_dir, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("strategy = tsp5k\nk = 6  # comment\nseed = 9\n")
    assert run("solve", "--instances", str(tsp_dir), "--config", str(cfg)) == 0
    assert "strategy=tsp5k" in capsys.readouterr().out
    # flags beat the file
    assert run("solve", "--instances", str(tsp_dir), "--config", str(cfg),
               "--strategy", "seed") == 0
    assert "strategy=seed" in capsys.readouterr().out


def test_config_file_errors(tmp_path, tsp_dir):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("warp = 9\n")
    assert run("solve", "--instances", str(tsp_dir), "--config", str(cfg)) == 1
    cfg.write_text("k = banana\n")
    assert run("solve", "--instances", str(tsp_dir), "--config", str(cfg)) == 1
    cfg.write_text("k : 5\n")
    assert run("solve", "--instances", str(tsp_dir), "--config", str(cfg)) == 1
    assert run("solve", "--instances", str(tsp_dir),
               "--config", str(tmp_path / "ghost.cfg")) == 1


def test_build_config_unit():
    cfg = build_config(None, k=7, mvdf=True)
    assert cfg.k == 7 and cfg.mvdf is True and cfg.strategy == "seed"
    with pytest.raises(ConfigError):
        build_config(None, k=0)
    with pytest.raises(ConfigError):
        build_config(None, select="beam")
    with pytest.raises(ConfigError):
        build_config(None, policy_sigma1=-1.0)


def test_load_config_file_types(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("mvdf = yes\nk = 12\npolicy_w3 = 0.25\nstrategy = tsp1k\n")
    got = load_config_file(cfg)
    assert got == {"mvdf": True, "k": 12, "policy_w3": 0.25, "strategy": "tsp1k"}
    params = build_config(cfg).policy_params()
    assert params.w3 == 0.25


# --------------------------------------------------------------------- evolve

def test_evolve_mock_end_to_end(tsp_dir, tmp_path, capsys):
    out = tmp_path / "evo"
    code = run(
        "evolve", "--instances", str(tsp_dir), "--out", str(out),
        "--generator", "mock", "--population", "4", "--generations", "2",
        "--k", "6", "--seed", "0", "--transfer", str(tsp_dir),
    )
    assert code == 0
    stdout = capsys.readouterr().out
    assert "best fitness" in stdout
    assert "transfer evolved" in stdout and "transfer seed" in stdout
    rec = dsl.load_strategy(out / "best_strategy.json")
    assert rec.name == "evolved-tsp"
    assert rec.fitness is not None
    with open(out / "history.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3
    best = [float(r["best_fitness"]) for r in rows]
    assert best == sorted(best)


def test_evolve_llm_without_endpoint_is_config_error(tsp_dir, monkeypatch, capsys):
    monkeypatch.delenv("LLM_ENDPOINT", raising=False)
    assert run("evolve", "--instances", str(tsp_dir), "--generator", "llm") == 1
    assert "LLM_ENDPOINT" in capsys.readouterr().err


# ---------------------------------------------------------------------- bench

def test_bench_grid(tsp_dir, tmp_path, capsys):
    out = tmp_path / "bench"
    code = run(
        "bench", "--instances", str(tsp_dir), "--out", str(out),
        "--strategies", "identity,seed", "--rrc", "0,5", "--k", "6",
        "--ref", "two-opt",
    )
    assert code == 0
    table = capsys.readouterr().out
    for label in ("identity", "identity+rrc5", "seed", "seed+rrc5"):
        assert label in table
    with open(out / "bench.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4
    assert all(r["mean_gap_percent"] for r in rows)


def test_bench_argument_errors(tsp_dir, capsys):
    assert run("bench", "--instances", str(tsp_dir), "--rrc", "two") == 1
    assert run("bench", "--instances", str(tsp_dir), "--strategies", " , ") == 1


# --------------------------------------------------------------------- oracle

def test_oracle_reference_table(tsp_dir, capsys):
    assert run("oracle", "--instances", str(tsp_dir), "--method", "nearest-neighbor") == 0
    out = capsys.readouterr().out
    assert "oracle: nearest-neighbor" in out


def test_oracle_gaps_stored_solutions(tsp_dir, tmp_path, capsys):
    sols = tmp_path / "sols"
    assert run("solve", "--instances", str(tsp_dir), "--out", str(sols), "--k", "8") == 0
    capsys.readouterr()
    assert run("oracle", "--instances", str(tsp_dir), "--method", "two-opt",
               "--solutions", str(sols), "--out", str(tmp_path / "gaps.csv")) == 0
    out = capsys.readouterr().out
    assert "mean gap" in out
    assert (tmp_path / "gaps.csv").exists()


def test_oracle_kind_mismatch_exits_1(cvrp_dir, capsys):
    assert run("oracle", "--instances", str(cvrp_dir), "--method", "held-karp") == 1
    assert "applies to TSP" in capsys.readouterr().err


def test_oracle_brute_cvrp_runs(cvrp_dir):
    assert run("oracle", "--instances", str(cvrp_dir), "--method", "brute-cvrp") == 0


def test_oracle_missing_solution_exits_1(tsp_dir, tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert run("oracle", "--instances", str(tsp_dir), "--method", "two-opt",
               "--solutions", str(empty)) == 1
    assert "no solution file" in capsys.readouterr().err


def test_oracle_tampered_solution_exits_2(tsp_dir, tmp_path, capsys):
    sols = tmp_path / "sols"
    assert run("solve", "--instances", str(tsp_dir), "--out", str(sols), "--k", "8") == 0
    victim = next(sols.glob("*.sol"))
    lines = victim.read_text().splitlines()
    lines = [("OBJECTIVE 2.0" if l.startswith("OBJECTIVE") else l) for l in lines]
    victim.write_text("\n".join(lines) + "\n")
    assert run("oracle", "--instances", str(tsp_dir), "--method", "two-opt",
               "--solutions", str(sols)) == 2
    assert "corrupt solution file" in capsys.readouterr().err
