"""Hybrid solve strategies and the benchmark harness.

Strategy 1 uses a trained operator model to predict the density directly
from the modified boundary data, replacing the whole iteration with one
inference plus one assembly.  Strategy 2 uses the prediction only as the
iteration's starting point, keeping the solver's accuracy while cutting
the iteration count.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from kfbi.bie import (
    IterationReport,
    PotentialCalculator,
    ProblemSpec,
    assemble_solution,
    modified_boundary_data,
    richardson_solve,
    solution_errors,
)
from kfbi import models as model_mod


@dataclass
class StrategyResult:
    field: np.ndarray
    inside: np.ndarray
    phi: np.ndarray
    report: IterationReport | None = None
    inference_time: float = 0.0
    wall_time: float = 0.0


def _predict(model, g_mod, params):
    t0 = time.perf_counter()
    phi = model_mod.infer(model, g_mod, params)
    return np.asarray(phi, dtype=float), time.perf_counter() - t0


def strategy1(
    spec: ProblemSpec,
    model,
    params: np.ndarray | None = None,
    calc: PotentialCalculator | None = None,
) -> StrategyResult:
    """Model-predicted density, no iteration: one inference, one assembly."""
    t0 = time.perf_counter()
    calc = calc or PotentialCalculator(spec)
    g_mod = modified_boundary_data(calc)
    phi, t_inf = _predict(model, g_mod, params)
    fld, inside = assemble_solution(spec, phi, calc=calc)
    return StrategyResult(
        field=fld, inside=inside, phi=phi,
        inference_time=t_inf, wall_time=time.perf_counter() - t0,
    )


def strategy2(
    spec: ProblemSpec,
    model,
    params: np.ndarray | None = None,
    gamma: float = 0.75,
    tol: float = 1e-8,
    tol_mode: str = "relative",
    max_iter: int = 500,
    calc: PotentialCalculator | None = None,
) -> StrategyResult:
    """Model-predicted density as the Richardson starting point."""
    t0 = time.perf_counter()
    calc = calc or PotentialCalculator(spec)
    g_mod = modified_boundary_data(calc)
    phi0, t_inf = _predict(model, g_mod, params)
    phi, report = richardson_solve(
        spec, phi0=phi0, gamma=gamma, tol=tol, tol_mode=tol_mode,
        max_iter=max_iter, calc=calc, g_tilde=g_mod,
    )
    fld, inside = assemble_solution(spec, phi, calc=calc)
    return StrategyResult(
        field=fld, inside=inside, phi=phi, report=report,
        inference_time=t_inf, wall_time=time.perf_counter() - t0,
    )


def standard(
    spec: ProblemSpec,
    gamma: float = 0.75,
    tol: float = 1e-8,
    tol_mode: str = "relative",
    max_iter: int = 500,
    phi0: np.ndarray | None = None,
    calc: PotentialCalculator | None = None,
) -> StrategyResult:
    t0 = time.perf_counter()
    calc = calc or PotentialCalculator(spec)
    phi, report = richardson_solve(
        spec, phi0=phi0, gamma=gamma, tol=tol, tol_mode=tol_mode,
        max_iter=max_iter, calc=calc,
    )
    fld, inside = assemble_solution(spec, phi, calc=calc)
    return StrategyResult(
        field=fld, inside=inside, phi=phi, report=report,
        wall_time=time.perf_counter() - t0,
    )


@dataclass
class BenchmarkRow:
    name: str
    method: str
    grid: int
    linf: float = float("nan")
    l2: float = float("nan")
    iterations: int = 0
    wall_time: float = float("nan")
    inference_time: float = float("nan")
    inference_as_iterations: float = float("nan")
    time_saved: float = float("nan")
    failed: str = ""


CSV_COLUMNS = (
    "name", "method", "grid", "linf", "l2", "iterations",
    "wall_time", "inference_time", "inference_as_iterations",
    "time_saved", "failed",
)


@dataclass
class BenchmarkReport:
    rows: list[BenchmarkRow] = field(default_factory=list)

    def to_csv(self) -> str:
        out = [",".join(CSV_COLUMNS)]
        for r in self.rows:
            out.append(",".join(str(getattr(r, c)) for c in CSV_COLUMNS))
        return "\n".join(out) + "\n"


def run_benchmark(cases: list[dict], repeats: int = 3) -> BenchmarkReport:
    """Run (problem, method) cases and tabulate accuracy and cost.

    Each case dict: ``name``, ``spec`` (ProblemSpec), ``method`` in
    {standard, strategy1, strategy2}, optional ``model``, ``params``,
    ``exact`` (callable u), ``gamma``, ``tol``, ``tol_mode``.  Wall
    times are the median of ``repeats`` runs on warmed caches; the
    standard run of the same ``name`` provides the baseline for the
    time-saved column.
    """
    report = BenchmarkReport()
    baselines: dict[str, BenchmarkRow] = {}
    calcs: dict[int, PotentialCalculator] = {}
    for case in cases:
        spec: ProblemSpec = case["spec"]
        method = case["method"]
        row = BenchmarkRow(name=case.get("name", "case"), method=method, grid=spec.grid.nx)
        try:
            calc = calcs.get(id(spec))
            if calc is None:
                calc = PotentialCalculator(spec)
                calcs[id(spec)] = calc
            kw = {k: case[k] for k in ("gamma", "tol", "tol_mode") if k in case}
            times = []
            for _ in range(repeats):
                if method == "standard":
                    res = standard(spec, calc=calc, **kw)
                elif method == "strategy1":
                    res = strategy1(spec, case["model"], case.get("params"), calc=calc)
                elif method == "strategy2":
                    res = strategy2(spec, case["model"], case.get("params"), calc=calc, **kw)
                else:
                    raise ValueError(f"unknown method {method!r}")
                times.append(res.wall_time)
            row.wall_time = float(np.median(times))
            if res.report is not None:
                row.iterations = res.report.iterations
            row.inference_time = res.inference_time
            if case.get("exact") is not None:
                row.linf, row.l2 = solution_errors(spec, res.field, res.inside, case["exact"])
            base = baselines.get(row.name)
            if method == "standard":
                baselines[row.name] = row
            elif base is not None:
                row.time_saved = 1.0 - row.wall_time / base.wall_time
                if base.iterations and res.inference_time:
                    per_iter = base.wall_time / base.iterations
                    row.inference_as_iterations = res.inference_time / per_iter
        except Exception as exc:  # noqa: BLE001 - row-level isolation
            row.failed = type(exc).__name__ + ": " + str(exc)
        report.rows.append(row)
    return report
