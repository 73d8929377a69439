"""File formats and structured-text parsers.

Grid fields travel in the "KFBIF1" container (ASCII header, float64
little-endian payload).  Problem, dataset-config and benchmark-suite
files are line-based structured text: one ``key value...`` pair per
line, ``#`` comments, ``key=value`` tokens for curve descriptors.
"""

from __future__ import annotations

import math

import numpy as np

from kfbi.bie import DIRICHLET, NEUMANN, ProblemSpec
from kfbi.datagen import CatalogEntry, SumSolution, _FAMILIES
from kfbi.geometry import build_curve
from kfbi.grid import GridContext

FIELD_MAGIC = "KFBIF1"


class FormatError(ValueError):
    pass


def _num(token: str) -> float:
    """Numeric literal, allowing pi arithmetic like ``pi/7`` or ``2*pi``."""
    try:
        return float(token)
    except ValueError:
        pass
    allowed = set("0123456789.+-*/()pi ")
    if not set(token) <= allowed:
        raise FormatError(f"bad numeric literal {token!r}")
    try:
        return float(eval(token, {"__builtins__": {}}, {"pi": math.pi}))
    except Exception as exc:
        raise FormatError(f"bad numeric literal {token!r}") from exc


# ---------------------------------------------------------------------------
# Grid-field container
# ---------------------------------------------------------------------------


def write_field(path, grid: GridContext, field: np.ndarray) -> None:
    lines = [
        FIELD_MAGIC,
        f"nx {grid.nx}",
        f"ny {grid.ny}",
        f"box {grid.x_lo!r} {grid.x_hi!r} {grid.y_lo!r} {grid.y_hi!r}",
        "end",
    ]
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        fh.write(np.ascontiguousarray(field, dtype="<f8").tobytes())


def read_field(path) -> tuple[GridContext, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    pos = blob.find(b"\n")
    if pos < 0 or blob[:pos].decode("ascii", "replace") != FIELD_MAGIC:
        raise FormatError(f"{path}: not a {FIELD_MAGIC} field file")
    pos += 1
    fields = {}
    while True:
        nxt = blob.find(b"\n", pos)
        if nxt < 0:
            raise FormatError(f"{path}: truncated header")
        line = blob[pos:nxt].decode("ascii")
        pos = nxt + 1
        if line == "end":
            break
        parts = line.split()
        fields[parts[0]] = parts[1:]
    nx, ny = int(fields["nx"][0]), int(fields["ny"][0])
    box = [float(v) for v in fields["box"]]
    grid = GridContext(box[0], box[1], box[2], box[3], nx, ny)
    count = (nx + 1) * (ny + 1)
    if len(blob) - pos != count * 8:
        raise FormatError(f"{path}: payload size mismatch")
    arr = np.frombuffer(blob[pos:], dtype="<f8").reshape(ny + 1, nx + 1).copy()
    return grid, arr


def field_to_csv(path, grid: GridContext, field: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.write("x,y,value\n")
        X, Y = grid.meshgrid()
        for xv, yv, vv in zip(X.ravel(), Y.ravel(), np.asarray(field).ravel()):
            fh.write(f"{xv!r},{yv!r},{vv!r}\n")


# ---------------------------------------------------------------------------
# Structured-text parsing
# ---------------------------------------------------------------------------


def parse_lines(path) -> list[list[str]]:
    out = []
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if line:
                out.append(line.split())
    return out


def _parse_kv(tokens: list[str]) -> dict:
    d = {}
    for tok in tokens:
        if "=" not in tok:
            raise FormatError(f"expected key=value token, got {tok!r}")
        k, v = tok.split("=", 1)
        d[k] = v
    return d


def parse_curve_tokens(tokens: list[str]) -> dict:
    """Curve descriptor from key=value tokens."""
    kv = _parse_kv(tokens)
    kind = kv.pop("kind", None)
    if kind is None:
        raise FormatError("curve line needs kind=...")
    desc: dict = {"kind": kind}
    if kind == "spline":
        pts = kv.pop("points", "")
        coords = [tuple(_num(c) for c in p.split(",")) for p in pts.split(";") if p]
        desc["points"] = coords
        if "perturb" in kv:
            pert = [
                (int(p.split(",")[0]), _num(p.split(",")[1]), _num(p.split(",")[2]))
                for p in kv.pop("perturb").split(";") if p
            ]
            desc["perturb"] = pert
    for k, v in kv.items():
        desc[k] = int(v) if k == "arms" else _num(v)
    return desc


def parse_solution_tokens(tokens: list[str]):
    """``family c1 c2 ... [+ family c1 ...]`` summed catalog terms."""
    terms = []
    cur: list[str] = []
    for tok in tokens + ["+"]:
        if tok == "+":
            if cur:
                family = cur[0]
                if family not in _FAMILIES:
                    raise FormatError(f"unknown solution family {family!r}")
                coeffs = tuple(_num(c) for c in cur[1:])
                if len(coeffs) != _FAMILIES[family].n_coeffs:
                    raise FormatError(
                        f"family {family!r} takes {_FAMILIES[family].n_coeffs} "
                        f"coefficients, got {len(coeffs)}"
                    )
                terms.append(CatalogEntry(family=family, coeffs=coeffs))
                cur = []
        else:
            cur.append(tok)
    if not terms:
        raise FormatError("empty solution spec")
    return SumSolution(terms=tuple(terms))


def parse_problem_file(path) -> dict:
    """Problem description: curve, box, grid, bc, optional exact solution."""
    seen: dict = {"options": {}}
    for parts in parse_lines(path):
        key, rest = parts[0], parts[1:]
        if key == "curve":
            seen["curve"] = parse_curve_tokens(rest)
        elif key == "box":
            if len(rest) != 4:
                raise FormatError("box needs 4 numbers")
            seen["box"] = [_num(v) for v in rest]
        elif key == "grid":
            seen["grid"] = int(rest[0])
        elif key == "m":
            seen["m"] = int(rest[0])
        elif key == "kappa":
            seen["kappa"] = _num(rest[0])
        elif key == "bc":
            if rest[0] not in (DIRICHLET, NEUMANN):
                raise FormatError(f"unknown bc {rest[0]!r}")
            seen["bc"] = rest[0]
        elif key == "solution":
            seen["solution"] = parse_solution_tokens(rest)
        elif key in ("gamma", "tol"):
            seen["options"][key] = _num(rest[0])
        elif key == "tol_mode":
            if rest[0] not in ("relative", "absolute"):
                raise FormatError(f"unknown tol_mode {rest[0]!r}")
            seen["options"]["tol_mode"] = rest[0]
        elif key == "max_iter":
            seen["options"]["max_iter"] = int(rest[0])
        elif key == "phi0":
            if rest[0] not in ("default", "zero"):
                raise FormatError(f"unknown phi0 mode {rest[0]!r}")
            seen["options"]["phi0"] = rest[0]
        else:
            raise FormatError(f"{path}: unknown problem key {key!r}")
    for required in ("curve", "box", "grid"):
        if required not in seen:
            raise FormatError(f"{path}: missing {required!r} line")
    return seen


def build_problem(parsed: dict):
    """(ProblemSpec, exact solution or None, solver options) from a parse."""
    curve = build_curve(dict(parsed["curve"]))
    box = parsed["box"]
    n = parsed["grid"]
    grid = GridContext(box[0], box[1], box[2], box[3], n, n)
    kappa = parsed.get("kappa", 0.0)
    bc = parsed.get("bc", DIRICHLET)
    solution = parsed.get("solution")
    if solution is not None:
        if bc == DIRICHLET:
            g = solution.u
        else:
            # normal derivative is bound later, once nodes exist
            g = None
        f = solution.source(kappa)
    else:
        g = lambda x, y: np.zeros_like(x)  # noqa: E731
        f = None
    spec = ProblemSpec(
        curve=curve, grid=grid, kappa=kappa, bc_kind=bc,
        g=g, f=f, num_nodes=parsed.get("m", 0),
    )
    return spec, solution, dict(parsed.get("options", {}))


def neumann_boundary_data(nodes, solution):
    """Normal-derivative boundary data bound to a concrete node set."""
    def g(x, y):
        gx, gy = solution.grad(x, y)
        return nodes.normals[:, 0] * gx + nodes.normals[:, 1] * gy
    return g


def parse_dataset_config(path) -> tuple[dict, int]:
    """Dataset-generation config; returns (config dict, seed)."""
    config: dict = {}
    seed = 0
    for parts in parse_lines(path):
        key, rest = parts[0], parts[1:]
        if key == "curve":
            config["curve"] = parse_curve_tokens(rest)
        elif key == "box":
            config["box"] = [_num(v) for v in rest]
        elif key in ("grid", "m", "count", "pairs_per_point"):
            config[key] = int(rest[0])
        elif key in ("kappa", "tol"):
            config[key] = _num(rest[0])
        elif key == "tol_mode":
            config["tol_mode"] = rest[0]
        elif key == "seed":
            seed = int(rest[0])
        elif key == "families":
            config["families"] = rest
        elif key == "coeff_range":
            config["coeff_range"] = (_num(rest[0]), _num(rest[1]))
        elif key == "param_names":
            config["param_names"] = tuple(rest)
        elif key == "domain_family":
            config["domain_family"] = rest[0]
        elif key == "param_points":
            config["param_points"] = [
                [_num(c) for c in tok.split(",")] for tok in rest
            ]
        else:
            raise FormatError(f"{path}: unknown datagen key {key!r}")
    return config, seed


def parse_suite_file(path) -> list[dict]:
    """Benchmark suite: ``case NAME PROBLEM-FILE METHOD [model=...] [params=...]``."""
    cases = []
    for parts in parse_lines(path):
        if parts[0] != "case":
            raise FormatError(f"{path}: suite lines must start with 'case'")
        if len(parts) < 4:
            raise FormatError(f"{path}: case needs name, problem file and method")
        case = {"name": parts[1], "problem": parts[2], "method": parts[3]}
        for tok in parts[4:]:
            k, v = tok.split("=", 1)
            if k == "model":
                case["model_path"] = v
            elif k == "params":
                case["params"] = np.array([_num(c) for c in v.split(",")])
            else:
                raise FormatError(f"{path}: unknown case option {k!r}")
        cases.append(case)
    return cases
