"""Field container and structured-text parser tests."""

import numpy as np
import pytest

from kfbi.bie import DIRICHLET, NEUMANN
from kfbi.geometry import sample_quasi_uniform
from kfbi.grid import GridContext
from kfbi.io import (
    FormatError,
    _num,
    build_problem,
    field_to_csv,
    neumann_boundary_data,
    parse_curve_tokens,
    parse_dataset_config,
    parse_problem_file,
    parse_solution_tokens,
    parse_suite_file,
    read_field,
    write_field,
)


def test_numeric_literals():
    assert _num("1.5") == 1.5
    assert _num("pi/7") == pytest.approx(np.pi / 7)
    assert _num("2*pi") == pytest.approx(2 * np.pi)
    assert _num("-pi") == pytest.approx(-np.pi)
    with pytest.raises(FormatError):
        _num("pi;import os")
    with pytest.raises(FormatError):
        _num("banana")


def test_field_roundtrip(tmp_path):
    grid = GridContext(-1.0, 1.0, -1.0, 1.0, 16, 16)
    rng = np.random.default_rng(0)
    field = rng.standard_normal(grid.shape)
    path = tmp_path / "f.kfbif"
    write_field(path, grid, field)
    grid2, back = read_field(path)
    assert grid2 == grid
    assert np.array_equal(back, field)


def test_field_rejects_corruption(tmp_path):
    grid = GridContext(-1.0, 1.0, -1.0, 1.0, 16, 16)
    path = tmp_path / "f.kfbif"
    write_field(path, grid, grid.zero_field())
    blob = path.read_bytes()
    short = tmp_path / "short.kfbif"
    short.write_bytes(blob[:-4])
    with pytest.raises(FormatError):
        read_field(short)
    bad = tmp_path / "bad.kfbif"
    bad.write_bytes(b"WRONG\n" + blob)
    with pytest.raises(FormatError):
        read_field(bad)


def test_field_csv(tmp_path):
    grid = GridContext(0.0, 1.0, 0.0, 1.0, 8, 8)
    path = tmp_path / "f.csv"
    field_to_csv(path, grid, np.ones(grid.shape))
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "x,y,value"
    assert len(lines) == 1 + 81


def test_curve_tokens():
    desc = parse_curve_tokens(["kind=rotated-ellipse", "ra=1.0", "rb=0.5", "alpha=pi/7"])
    assert desc["kind"] == "rotated-ellipse"
    assert desc["alpha"] == pytest.approx(np.pi / 7)
    star = parse_curve_tokens(["kind=star", "arms=5", "amplitude=0.1"])
    assert star["arms"] == 5 and isinstance(star["arms"], int)
    spl = parse_curve_tokens(
        ["kind=spline", "points=0,1;1,0;0,-1;-1,0;0.5,0.5;-0.5,0.5", "perturb=1,0.05,-0.02"]
    )
    assert len(spl["points"]) == 6
    assert spl["perturb"] == [(1, 0.05, -0.02)]
    with pytest.raises(FormatError):
        parse_curve_tokens(["ra=1.0"])  # no kind
    with pytest.raises(FormatError):
        parse_curve_tokens(["kind=star", "arms"])  # not key=value


def test_solution_tokens():
    sol = parse_solution_tokens(["harmonic-exp-cos", "1.0", "+", "exp", "0.6", "0.8"])
    x, y = np.array([0.2]), np.array([0.1])
    expect = np.exp(x) * np.cos(y) + np.exp(0.6 * x + 0.8 * y)
    assert np.allclose(sol.u(x, y), expect)
    with pytest.raises(FormatError):
        parse_solution_tokens(["harmonic-exp-cos", "1.0", "2.0"])  # coeff count
    with pytest.raises(FormatError):
        parse_solution_tokens(["no-such-family", "1.0"])
    with pytest.raises(FormatError):
        parse_solution_tokens([])


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


PROBLEM = """\
# a Dirichlet Laplace problem
curve kind=rotated-ellipse cx=0.2 cy=0.4 ra=1.0 rb=0.5 alpha=pi/7
box -1.2 1.2 -1.2 1.2
grid 128
kappa 0.0
bc dirichlet
solution harmonic-exp-cos 1.0 + harmonic-exp-sin 1.0
gamma 0.75
tol 1e-8
tol_mode relative
"""


def test_problem_parse_and_build(tmp_path):
    path = _write(tmp_path, "p.problem", PROBLEM)
    parsed = parse_problem_file(path)
    spec, solution, options = build_problem(parsed)
    assert spec.bc_kind == DIRICHLET
    assert spec.grid.nx == 128 and spec.grid.h == pytest.approx(2.4 / 128)
    assert spec.f is None  # harmonic, kappa = 0
    assert options == {"gamma": 0.75, "tol": 1e-8, "tol_mode": "relative"}
    x, y = np.array([0.1]), np.array([0.2])
    assert np.allclose(solution.u(x, y), np.exp(x) * np.cos(y) + np.exp(y) * np.sin(x))
    assert np.allclose(spec.g(x, y), solution.u(x, y))


def test_problem_parse_errors(tmp_path):
    with pytest.raises(FormatError):
        parse_problem_file(_write(tmp_path, "a", "grid 64\nbox -1 1 -1 1\n"))  # no curve
    with pytest.raises(FormatError):
        parse_problem_file(_write(tmp_path, "b", PROBLEM + "wibble 3\n"))
    with pytest.raises(FormatError):
        parse_problem_file(_write(tmp_path, "c", PROBLEM + "bc robin\n"))
    with pytest.raises(FormatError):
        parse_problem_file(_write(tmp_path, "d", PROBLEM + "tol_mode maybe\n"))


def test_neumann_problem_defers_boundary_data(tmp_path):
    text = PROBLEM.replace("bc dirichlet", "bc neumann").replace("kappa 0.0", "kappa 1.0")
    spec, solution, _ = build_problem(parse_problem_file(_write(tmp_path, "n", text)))
    assert spec.bc_kind == NEUMANN
    assert spec.g is None  # bound later, once nodes exist
    nodes = sample_quasi_uniform(spec.curve, 32)
    g = neumann_boundary_data(nodes, solution)
    x, y = nodes.points.T
    gx, gy = solution.grad(x, y)
    expect = nodes.normals[:, 0] * gx + nodes.normals[:, 1] * gy
    assert np.allclose(g(x, y), expect)


def test_dataset_config_parse(tmp_path):
    text = """\
box -1.2 1.2 -1.2 1.2
grid 64
m 64
kappa 0.0
count 10
seed 42
curve kind=rotated-ellipse ra=0.8 rb=0.8
families harmonic-exp-cos harmonic-poly
coeff_range 0.5 2.0
"""
    config, seed = parse_dataset_config(_write(tmp_path, "cfg", text))
    assert seed == 42
    assert config["count"] == 10
    assert config["families"] == ["harmonic-exp-cos", "harmonic-poly"]
    assert config["coeff_range"] == (0.5, 2.0)
    with pytest.raises(FormatError):
        parse_dataset_config(_write(tmp_path, "bad", "volume 3\n"))


def test_dataset_config_param_points(tmp_path):
    text = """\
box -1.5 1.5 -1.5 1.5
grid 64
param_points 3,0.1 4,0.05
pairs_per_point 5
param_names arms amplitude
domain_family star
"""
    config, _ = parse_dataset_config(_write(tmp_path, "cfg", text))
    assert config["param_points"] == [[3.0, 0.1], [4.0, 0.05]]
    assert config["pairs_per_point"] == 5


def test_suite_parse(tmp_path):
    text = """\
case base eq1.problem standard
case warm eq1.problem strategy2 model=w.kfbiw params=3,0.1
"""
    cases = parse_suite_file(_write(tmp_path, "suite", text))
    assert cases[0] == {"name": "base", "problem": "eq1.problem", "method": "standard"}
    assert cases[1]["model_path"] == "w.kfbiw"
    assert np.array_equal(cases[1]["params"], [3.0, 0.1])
    with pytest.raises(FormatError):
        parse_suite_file(_write(tmp_path, "bad1", "run a b c\n"))
    with pytest.raises(FormatError):
        parse_suite_file(_write(tmp_path, "bad2", "case onlyname\n"))
