"""File formats: TSPLIB-subset instances, solution files, manifests.

Instances use the classic TSPLIB layout restricted to EUC_2D problems of TYPE
TSP or CVRP with NODE_COORD_SECTION (plus DEMAND_SECTION/DEPOT_SECTION and
CAPACITY for CVRP). Node ids are 1-based in files and 0-based everywhere in
the API; the depot must be node 1. Coordinates are written with full repr
precision so read(write(x)) reproduces x exactly; the synthetic distribution
tag rides along in the COMMENT line.

Solution files are a small text format (0-based ids):

    KIND TSP|CVRP
    NAME <instance name>
    OBJECTIVE <float repr>
    FEASIBLE true|false
    TOUR <id> <id> ...        (TSP)
    ROUTE <id> <id> ...       (CVRP, one line per route)

Reading a solution recomputes the objective against the instance and rejects
mismatches beyond 1e-6 as corrupt.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .construct import Solution, cvrp_objective, validate_solution
from .geometry import tour_length
from .instances import Instance


class ParseError(ValueError):
    def __init__(self, path, line_no: int | None, message: str):
        where = f"{path}:{line_no}" if line_no is not None else str(path)
        super().__init__(f"{where}: {message}")
        self.line = line_no


_HEADER_KEYS = {"NAME", "TYPE", "COMMENT", "DIMENSION", "EDGE_WEIGHT_TYPE", "CAPACITY"}
_SECTIONS = {"NODE_COORD_SECTION", "DEMAND_SECTION", "DEPOT_SECTION"}


def _distribution_from_comment(comment: str | None) -> str:
    if comment:
        for part in comment.replace(",", " ").split():
            if part.startswith("DISTRIBUTION="):
                return part.split("=", 1)[1].lower()
    return "file"


def read_tsplib(path) -> Instance:
    """Parse a TSPLIB-subset instance file. Errors carry file:line positions."""
    path = Path(path)
    header: dict[str, str] = {}
    coords: dict[int, tuple[float, float]] = {}
    demands: dict[int, int] = {}
    depot_ids: list[int] = []
    section = None
    lines = path.read_text().splitlines()
    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        upper = line.upper()
        if upper == "EOF":
            break
        if upper in _SECTIONS:
            section = upper
            continue
        if section is None:
            if ":" not in line:
                raise ParseError(path, line_no, f"expected 'KEY : VALUE' or a section, got {line!r}")
            key, value = (part.strip() for part in line.split(":", 1))
            key = key.upper()
            if key not in _HEADER_KEYS:
                raise ParseError(path, line_no, f"unsupported header key {key!r}")
            header[key] = value
            continue
        toks = line.split()
        if section == "NODE_COORD_SECTION":
            if len(toks) != 3:
                raise ParseError(path, line_no, "coordinate lines need 'id x y'")
            try:
                i = int(toks[0])
                x, y = float(toks[1]), float(toks[2])
            except ValueError:
                raise ParseError(path, line_no, f"bad coordinate line {line!r}") from None
            if i in coords:
                raise ParseError(path, line_no, f"duplicate node id {i}")
            coords[i] = (x, y)
        elif section == "DEMAND_SECTION":
            if len(toks) != 2:
                raise ParseError(path, line_no, "demand lines need 'id demand'")
            try:
                i, d = int(toks[0]), int(toks[1])
            except ValueError:
                raise ParseError(path, line_no, f"bad demand line {line!r}") from None
            if i in demands:
                raise ParseError(path, line_no, f"duplicate demand for node {i}")
            demands[i] = d
        elif section == "DEPOT_SECTION":
            try:
                i = int(toks[0])
            except ValueError:
                raise ParseError(path, line_no, f"bad depot line {line!r}") from None
            if i != -1:
                depot_ids.append(i)
        else:
            raise ParseError(path, line_no, f"content outside any known section: {line!r}")

    problem_type = header.get("TYPE", "").upper()
    if problem_type not in ("TSP", "CVRP"):
        raise ParseError(path, None, f"TYPE must be TSP or CVRP, got {header.get('TYPE')!r}")
    ewt = header.get("EDGE_WEIGHT_TYPE", "").upper()
    if ewt != "EUC_2D":
        raise ParseError(path, None, f"only EDGE_WEIGHT_TYPE EUC_2D is supported, got {ewt!r}")
    if "DIMENSION" not in header:
        raise ParseError(path, None, "missing DIMENSION")
    try:
        n = int(header["DIMENSION"])
    except ValueError:
        raise ParseError(path, None, f"DIMENSION must be an integer, got {header['DIMENSION']!r}") from None
    if n < 1:
        raise ParseError(path, None, "DIMENSION must be >= 1")
    if set(coords) != set(range(1, n + 1)):
        raise ParseError(path, None, f"need coordinates for exactly nodes 1..{n}")
    xy = np.array([coords[i] for i in range(1, n + 1)], dtype=np.float64)
    name = header.get("NAME", path.stem)
    distribution = _distribution_from_comment(header.get("COMMENT"))

    if problem_type == "TSP":
        if demands or depot_ids or "CAPACITY" in header:
            raise ParseError(path, None, "TSP files cannot carry CVRP sections")
        return Instance(name, "tsp", xy, distribution=distribution)

    if "CAPACITY" not in header:
        raise ParseError(path, None, "CVRP files need CAPACITY")
    try:
        capacity = int(header["CAPACITY"])
    except ValueError:
        raise ParseError(path, None, f"CAPACITY must be an integer, got {header['CAPACITY']!r}") from None
    if set(demands) != set(range(1, n + 1)):
        raise ParseError(path, None, f"need demands for exactly nodes 1..{n}")
    if depot_ids != [1]:
        raise ParseError(path, None, "DEPOT_SECTION must designate exactly node 1")
    dem = np.array([demands[i] for i in range(1, n + 1)], dtype=np.int64)
    if dem[0] != 0:
        raise ParseError(path, None, "the depot (node 1) must have demand 0")
    return Instance(name, "cvrp", xy, dem, capacity, distribution)


def write_tsplib(path, inst: Instance) -> None:
    lines = [
        f"NAME : {inst.name}",
        f"TYPE : {'TSP' if inst.kind == 'tsp' else 'CVRP'}",
        f"COMMENT : DISTRIBUTION={inst.distribution}",
        f"DIMENSION : {inst.n}",
        "EDGE_WEIGHT_TYPE : EUC_2D",
    ]
    if inst.kind == "cvrp":
        lines.append(f"CAPACITY : {inst.capacity}")
    lines.append("NODE_COORD_SECTION")
    for i, (x, y) in enumerate(inst.coords, start=1):
        lines.append(f"{i} {float(x)!r} {float(y)!r}")
    if inst.kind == "cvrp":
        lines.append("DEMAND_SECTION")
        for i, d in enumerate(inst.demands, start=1):
            lines.append(f"{i} {int(d)}")
        lines.extend(["DEPOT_SECTION", "1", "-1"])
    lines.append("EOF")
    Path(path).write_text("\n".join(lines) + "\n")


def write_solution(path, inst: Instance, sol: Solution) -> None:
    lines = [
        f"KIND {'TSP' if sol.kind == 'tsp' else 'CVRP'}",
        f"NAME {inst.name}",
        f"OBJECTIVE {float(sol.objective)!r}",
        f"FEASIBLE {'true' if sol.feasible else 'false'}",
    ]
    if sol.kind == "tsp":
        lines.append("TOUR " + " ".join(str(int(v)) for v in sol.tour))
    else:
        for r in sol.routes:
            if len(r) == 0:
                raise ValueError("refusing to write an empty route")
            lines.append("ROUTE " + " ".join(str(int(v)) for v in r))
    Path(path).write_text("\n".join(lines) + "\n")


def read_solution(path, inst: Instance, tol: float = 1e-6, rounded: bool = False) -> Solution:
    """Load and cross-check a solution file against its instance."""
    path = Path(path)
    kind = None
    objective = None
    feasible = True
    tour = None
    routes = []
    for line_no, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        key, _, rest = line.partition(" ")
        if key == "KIND":
            kind = rest.strip().lower()
        elif key == "NAME":
            pass
        elif key == "OBJECTIVE":
            try:
                objective = float(rest)
            except ValueError:
                raise ParseError(path, line_no, f"bad objective {rest!r}") from None
        elif key == "FEASIBLE":
            feasible = rest.strip().lower() == "true"
        elif key == "TOUR":
            tour = np.array([int(t) for t in rest.split()], dtype=np.intp)
        elif key == "ROUTE":
            ids = [int(t) for t in rest.split()]
            if not ids:
                raise ParseError(path, line_no, "corrupt solution file: empty route")
            routes.append(np.array(ids, dtype=np.intp))
        else:
            raise ParseError(path, line_no, f"unknown solution line {key!r}")
    if kind not in ("tsp", "cvrp"):
        raise ParseError(path, None, f"KIND must be TSP or CVRP, got {kind!r}")
    if objective is None:
        raise ParseError(path, None, "missing OBJECTIVE")
    if kind == "tsp":
        if tour is None:
            raise ParseError(path, None, "TSP solution needs a TOUR line")
        recomputed = tour_length(inst.coords, tour, rounded)
        sol = Solution("tsp", objective, tour=tour, feasible=feasible)
    else:
        if not routes:
            raise ParseError(path, None, "CVRP solution needs ROUTE lines")
        recomputed = cvrp_objective(inst.coords, routes, rounded)
        sol = Solution("cvrp", objective, routes=routes, feasible=feasible)
    if abs(recomputed - objective) > tol:
        raise ValueError(
            f"{path}: corrupt solution file: stored objective {objective} vs recomputed {recomputed}"
        )
    try:
        validate_solution(inst, sol, tol=tol, rounded=rounded)
    except ValueError as exc:
        raise ValueError(f"{path}: corrupt solution file: {exc}") from None
    return sol


def write_manifest(path, entries: list[dict], settings: dict | None = None) -> None:
    payload = {"instances": entries}
    if settings:
        payload["settings"] = settings
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def read_manifest(path) -> dict:
    payload = json.loads(Path(path).read_text())
    if "instances" not in payload:
        raise ValueError(f"{path}: manifest missing 'instances'")
    return payload


def instance_paths(target) -> list[Path]:
    """Expand a file, directory, or manifest path into instance files."""
    p = Path(target)
    if p.is_dir():
        manifest = p / "manifest.json"
        if manifest.exists():
            payload = read_manifest(manifest)
            return [p / entry["file"] for entry in payload["instances"]]
        return sorted(q for q in p.iterdir() if q.suffix in (".tsp", ".vrp"))
    if p.suffix == ".json":
        payload = read_manifest(p)
        return [p.parent / entry["file"] for entry in payload["instances"]]
    return [p]
