"""Kernel-free boundary integral solver for 2D elliptic PDEs.

Subpackages cover the Cartesian-grid interface solver, the boundary
integral layer with Richardson iteration, operator-learning models and
the hybrid solve strategies built on top of them.
"""

from kfbi.grid import GridContext, GridField, apply_operator, fast_solve
from kfbi.geometry import (
    BoundaryCurve,
    BoundaryNodeSet,
    PeriodicCubicSpline,
    build_curve,
    build_periodic_spline,
    classify_nodes,
    sample_quasi_uniform,
)
from kfbi.interface import BoundaryTrace, InterfaceSpec, InterfaceWorkspace
from kfbi.jumps import JumpSet, jumps_from_density
from kfbi.bie import (
    IterationReport,
    PotentialCalculator,
    ProblemSpec,
    assemble_solution,
    modified_boundary_data,
    richardson_solve,
    solution_errors,
    solve_bvp,
)
from kfbi.models import (
    LinearOperatorModel,
    ParamOperatorModel,
    fit_linear,
    load_weights,
    save_weights,
)
from kfbi.hybrid import run_benchmark, strategy1, strategy2

__version__ = "0.1.0"
