"""Hybrid strategies with oracle and trained models, and the benchmark table."""

import numpy as np
import pytest

from kfbi.bie import DIRICHLET, PotentialCalculator, ProblemSpec, modified_boundary_data, richardson_solve, solution_errors
from kfbi.datagen import generate_dataset
from kfbi.geometry import build_curve
from kfbi.grid import GridContext
from kfbi.hybrid import BenchmarkReport, BenchmarkRow, run_benchmark, standard, strategy1, strategy2
from kfbi.models import LinearOperatorModel, fit_linear

from conftest import eq1_solution

CIRCLE = {"kind": "rotated-ellipse", "cx": 0.05, "cy": -0.02, "ra": 0.8, "rb": 0.8}


@pytest.fixture(scope="module")
def problem():
    u, _, _ = eq1_solution()
    grid = GridContext(-1.2, 1.2, -1.2, 1.2, 128, 128)
    spec = ProblemSpec(build_curve(CIRCLE), grid, 0.0, DIRICHLET, g=u)
    calc = PotentialCalculator(spec)
    return spec, calc, u


@pytest.fixture(scope="module")
def oracle_model(problem):
    # rank-one model that is exact for this problem's boundary data
    spec, calc, _ = problem
    g_mod = modified_boundary_data(calc)
    phi, report = richardson_solve(spec, calc=calc, g_tilde=g_mod)
    assert report.converged
    w = np.outer(phi, g_mod) / (g_mod @ g_mod)
    return LinearOperatorModel(m=spec.m, layout="direct", tensors={"w": w}), phi


def test_strategy1_with_oracle_matches_standard(problem, oracle_model):
    spec, calc, u = problem
    model, phi_ref = oracle_model
    res = strategy1(spec, model, calc=calc)
    base = standard(spec, calc=calc)
    linf_s1, _ = solution_errors(spec, res.field, res.inside, u)
    linf_std, _ = solution_errors(spec, base.field, base.inside, u)
    assert abs(linf_s1 - linf_std) < 1e-8
    assert res.report is None and res.inference_time >= 0.0


def test_strategy2_with_oracle_converges_fast(problem, oracle_model):
    spec, calc, u = problem
    model, phi_ref = oracle_model
    res = strategy2(spec, model, calc=calc)
    base = standard(spec, calc=calc)
    assert res.report.converged
    assert res.report.iterations <= 3
    assert res.report.iterations < base.report.iterations
    # same fixed point, different start
    tol = 1e-8
    scale = np.abs(modified_boundary_data(calc)).max()
    assert np.abs(res.phi - base.phi).max() <= 10 * tol * scale


def test_strategy2_with_zero_model_behaves_like_cold_start(problem):
    spec, calc, _ = problem
    zero = LinearOperatorModel(m=spec.m, layout="direct", tensors={"w": np.zeros((spec.m, spec.m))})
    res = strategy2(spec, zero, calc=calc)
    base_zero, report = richardson_solve(spec, phi0=np.zeros(spec.m), calc=calc)
    assert res.report.iterations == report.iterations


def test_trained_model_beats_cold_start(problem):
    spec, calc, u = problem
    cfg = {
        "box": [-1.2, 1.2, -1.2, 1.2],
        "grid": 128,
        "curve": dict(CIRCLE),
        "count": 60,
        "kappa": 0.0,
        "families": ["harmonic-exp-cos", "harmonic-exp-sin", "harmonic-poly"],
        "coeff_range": (0.5, 2.0),
    }
    dataset, _ = generate_dataset(cfg, seed=9)
    model = fit_linear(dataset.g_mod, dataset.phi, ridge=1e-10)
    base = standard(spec, calc=calc)
    res = strategy2(spec, model, calc=calc)
    assert res.report.converged
    assert res.report.iterations <= 0.7 * base.report.iterations
    linf_s2, _ = solution_errors(spec, res.field, res.inside, u)
    linf_std, _ = solution_errors(spec, base.field, base.inside, u)
    assert linf_s2 <= linf_std * 1.01


def test_benchmark_rows_and_time_saved(problem, oracle_model):
    spec, calc, u = problem
    model, _ = oracle_model
    cases = [
        {"name": "c", "spec": spec, "method": "standard", "exact": u},
        {"name": "c", "spec": spec, "method": "strategy2", "model": model, "exact": u},
        {"name": "c", "spec": spec, "method": "strategy1", "model": model, "exact": u},
    ]
    report = run_benchmark(cases, repeats=1)
    assert len(report.rows) == 3
    std, s2, s1 = report.rows
    assert std.method == "standard" and std.iterations > 0
    assert np.isfinite(std.linf) and std.linf < 1e-3
    assert s2.iterations < std.iterations
    assert np.isfinite(s2.time_saved)
    csv = report.to_csv()
    assert csv.splitlines()[0].startswith("name,method,grid")
    assert len(csv.strip().splitlines()) == 4


def test_benchmark_isolates_failures(problem):
    spec, _, u = problem
    report = run_benchmark(
        [
            {"name": "bad", "spec": spec, "method": "no-such-method"},
            {"name": "ok", "spec": spec, "method": "standard", "exact": u},
        ],
        repeats=1,
    )
    assert report.rows[0].failed != ""
    assert report.rows[1].failed == ""
    assert np.isfinite(report.rows[1].linf)
