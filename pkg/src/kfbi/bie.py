"""Boundary integral layer built on the interface solver.

Potentials are realized as interface solves on the embedding box: the
double layer carries the density as a value jump, the single layer as a
flux jump, and the volume potential as a zero-extended source.  The
boundary density is found by Richardson iteration on the induced
second-kind equation; the final solution is assembled from the converged
density with one or two more interface solves.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field as dataclass_field
from typing import Callable

import numpy as np

from kfbi.geometry import BoundaryCurve, BoundaryNodeSet, sample_quasi_uniform
from kfbi.grid import GridContext, GridField
from kfbi.interface import BoundaryTrace, InterfaceSpec, InterfaceWorkspace, SourceFn

DIRICHLET = "dirichlet"
NEUMANN = "neumann"


class ProblemError(ValueError):
    pass


@dataclass(frozen=True)
class ProblemSpec:
    """One boundary value problem for Delta - kappa*I on the interior domain."""

    curve: BoundaryCurve
    grid: GridContext
    kappa: float
    bc_kind: str
    g: Callable[[np.ndarray, np.ndarray], np.ndarray]  # boundary data on Gamma
    f: SourceFn | None = None
    num_nodes: int = 0  # boundary nodes M; 0 means max(nx, ny)

    def __post_init__(self):
        if self.bc_kind not in (DIRICHLET, NEUMANN):
            raise ProblemError(f"unknown bc kind {self.bc_kind!r}")
        if self.kappa < 0:
            raise ProblemError("kappa must be nonnegative")
        if self.bc_kind == NEUMANN and self.kappa == 0 and self.f is None:
            # compatibility not checked; solution only defined up to a constant
            pass

    @property
    def m(self) -> int:
        # node spacing about twice the cell size keeps the discrete
        # boundary map a stable second-kind operator
        return self.num_nodes if self.num_nodes > 0 else max(self.grid.nx, self.grid.ny)


@dataclass
class IterationReport:
    iterations: int
    residual_history: list[float] = dataclass_field(default_factory=list)
    converged: bool = False
    wall_time: float = 0.0


class PotentialCalculator:
    """Caches the interface workspace and exposes the three potentials."""

    def __init__(self, spec: ProblemSpec, nodes: BoundaryNodeSet | None = None):
        self.spec = spec
        self.nodes = nodes or sample_quasi_uniform(spec.curve, spec.m)
        self.workspace = InterfaceWorkspace(spec.grid, spec.curve, self.nodes)

    def with_spec(self, spec: ProblemSpec) -> "PotentialCalculator":
        """Same geometry and cached workspace, different problem data."""
        other = PotentialCalculator.__new__(PotentialCalculator)
        other.spec = spec
        other.nodes = self.nodes
        other.workspace = self.workspace
        return other

    def double_layer(self, phi: np.ndarray) -> BoundaryTrace:
        """Interior trace of the double-layer potential of density phi."""
        ispec = InterfaceSpec(kappa=self.spec.kappa, phi=np.asarray(phi, dtype=float))
        _, trace = self.workspace.solve(ispec)
        return trace

    def volume_potential(self, f: SourceFn) -> tuple[GridField, BoundaryTrace]:
        ispec = InterfaceSpec(kappa=self.spec.kappa, f=f)
        return self.workspace.solve(ispec)

    def single_layer(self, psi: np.ndarray) -> tuple[GridField, BoundaryTrace]:
        ispec = InterfaceSpec(kappa=self.spec.kappa, psi=np.asarray(psi, dtype=float))
        return self.workspace.solve(ispec)

    def boundary_values(self, fn) -> np.ndarray:
        p = self.nodes.points
        return np.asarray(fn(p[:, 0], p[:, 1]), dtype=float)


def double_layer(curve, grid, kappa, phi, num_nodes=0):
    spec = ProblemSpec(curve, grid, kappa, DIRICHLET, g=lambda x, y: 0 * x, num_nodes=num_nodes)
    return PotentialCalculator(spec).double_layer(phi)


def volume_potential(curve, grid, kappa, f, num_nodes=0):
    spec = ProblemSpec(curve, grid, kappa, DIRICHLET, g=lambda x, y: 0 * x, num_nodes=num_nodes)
    return PotentialCalculator(spec).volume_potential(f)


def single_layer_flux(curve, grid, kappa, psi, num_nodes=0):
    """Interior one-sided normal derivative of the single-layer potential."""
    spec = ProblemSpec(curve, grid, kappa, DIRICHLET, g=lambda x, y: 0 * x, num_nodes=num_nodes)
    _, trace = PotentialCalculator(spec).single_layer(psi)
    return trace


def modified_boundary_data(calc: PotentialCalculator) -> np.ndarray:
    """Boundary data with the volume-potential contribution removed.

    Dirichlet: g - (Yf) on Gamma.  Neumann: g - dn(Yf)+ on Gamma.
    Performs at most one volume solve.
    """
    spec = calc.spec
    g = calc.boundary_values(spec.g)
    if spec.f is None:
        return g
    _, ytrace = calc.volume_potential(spec.f)
    if spec.bc_kind == DIRICHLET:
        return g - ytrace.values
    return g - ytrace.normal_derivative


def richardson_solve(
    spec: ProblemSpec,
    phi0: np.ndarray | None = None,
    gamma: float = 0.75,
    tol: float = 1e-8,
    tol_mode: str = "relative",
    max_iter: int = 500,
    calc: PotentialCalculator | None = None,
    g_tilde: np.ndarray | None = None,
    callback: Callable[[int, np.ndarray], None] | None = None,
) -> tuple[np.ndarray, IterationReport]:
    """Iterate the density to the fixed point of the second-kind equation.

    Dirichlet: phi <- phi + 2*gamma*(g_tilde - trace(W phi)).
    Neumann:   psi <- psi + gamma*(g_hat + dn(S psi)+).
    Convergence measures the max-norm of the update, relative to the
    modified data in "relative" mode, raw in "absolute" mode.
    """
    if not 0 < gamma < 1:
        raise ProblemError("relaxation factor must lie in (0, 1)")
    if tol_mode not in ("relative", "absolute"):
        raise ProblemError(f"unknown tolerance mode {tol_mode!r}")
    t0 = time.perf_counter()
    calc = calc or PotentialCalculator(spec)
    if g_tilde is None:
        g_tilde = modified_boundary_data(calc)
    if phi0 is not None:
        phi = np.array(phi0, dtype=float)
    elif spec.bc_kind == DIRICHLET:
        phi = 2.0 * calc.boundary_values(spec.g)
    else:
        phi = np.zeros_like(g_tilde)
    factor = 2.0 * gamma if spec.bc_kind == DIRICHLET else gamma
    scale = 1.0 if tol_mode == "absolute" else max(np.abs(g_tilde).max(), 1e-300)
    report = IterationReport(iterations=0)
    for k in range(max_iter):
        if spec.bc_kind == DIRICHLET:
            trace = calc.double_layer(phi).values
        else:
            trace = calc.single_layer(phi)[1].normal_derivative
        update = factor * (g_tilde - trace)
        phi = phi + update
        report.iterations = k + 1
        step = float(np.abs(update).max())
        report.residual_history.append(step)
        if callback is not None:
            callback(k, phi)
        if step <= tol * scale:
            report.converged = True
            break
    report.wall_time = time.perf_counter() - t0
    return phi, report


def assemble_solution(
    spec: ProblemSpec,
    phi: np.ndarray,
    calc: PotentialCalculator | None = None,
) -> tuple[GridField, np.ndarray]:
    """Interior solution field from a converged (or predicted) density.

    Returns the nodal field and the interior mask; exterior nodes hold
    NaN.  Dirichlet assembles W phi + Y f, Neumann assembles Y f - S psi.
    """
    calc = calc or PotentialCalculator(spec)
    ws = calc.workspace
    total = np.zeros(spec.grid.shape)
    if spec.f is not None:
        yfield, _ = ws.solve(InterfaceSpec(kappa=spec.kappa, f=spec.f))
        total += yfield
    if spec.bc_kind == DIRICHLET:
        wfield, _ = ws.solve(InterfaceSpec(kappa=spec.kappa, phi=np.asarray(phi, dtype=float)))
        total += wfield
    else:
        # the solver's flux-jump orientation already absorbs the minus
        # sign of the single-layer term
        sfield, _ = ws.solve(InterfaceSpec(kappa=spec.kappa, psi=np.asarray(phi, dtype=float)))
        total += sfield
    inside = ws.classification.inside
    total[~inside] = np.nan
    return total, inside


def solution_errors(
    spec: ProblemSpec,
    field: GridField,
    inside: np.ndarray,
    exact: Callable[[np.ndarray, np.ndarray], np.ndarray],
    pin_mean: bool = False,
) -> tuple[float, float]:
    """Interior max-norm and scaled l2-norm errors against an exact solution.

    ``pin_mean`` shifts the computed field to match the exact interior
    mean; used for pure Neumann problems where u is defined up to a
    constant.
    """
    X, Y = spec.grid.meshgrid()
    ref = exact(X[inside], Y[inside])
    vals = field[inside]
    if pin_mean:
        vals = vals - vals.mean() + ref.mean()
    err = np.abs(vals - ref)
    linf = float(err.max())
    l2 = float(np.sqrt(np.mean(err**2)))
    return linf, l2


def solve_bvp(
    spec: ProblemSpec,
    phi0: np.ndarray | None = None,
    gamma: float = 0.75,
    tol: float = 1e-8,
    tol_mode: str = "relative",
    max_iter: int = 500,
) -> tuple[GridField, np.ndarray, np.ndarray, IterationReport]:
    """Full pipeline: density iteration plus solution assembly."""
    calc = PotentialCalculator(spec)
    phi, report = richardson_solve(
        spec, phi0=phi0, gamma=gamma, tol=tol, tol_mode=tol_mode,
        max_iter=max_iter, calc=calc,
    )
    field, inside = assemble_solution(spec, phi, calc=calc)
    return field, inside, phi, report
