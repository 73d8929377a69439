"""Interface-solver tests: quadratic exactness and trace extraction.

The solver's correction terms truncate the jump Taylor expansion after
the quadratic term and the trace interpolation fits a quadratic, so a
piecewise-quadratic manufactured solution must come out to rounding
(modulo the spline representation of the jump data, hence many nodes).
"""

import numpy as np
import pytest

from kfbi.geometry import build_curve, classify_nodes, sample_quasi_uniform
from kfbi.interface import BoundaryTrace, InterfaceSpec, InterfaceWorkspace
from kfbi.grid import GridContext


QUAD = (0.3, 0.5, -0.2, 0.4, 0.25, -0.15)  # c0 + c1 x + c2 y + c3 x^2 + c4 xy + c5 y^2


def _q(x, y, c=QUAD):
    return c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y


def _q_grad(x, y, c=QUAD):
    return c[1] + 2 * c[3] * x + c[4] * y, c[2] + c[4] * x + 2 * c[5] * y


def _q_lap(c=QUAD):
    return 2 * c[3] + 2 * c[5]


def _workspace(n=64, m=8192, curve=None):
    curve = curve or build_curve(
        {"kind": "rotated-ellipse", "cx": 0.05, "cy": -0.02, "ra": 0.8, "rb": 0.8}
    )
    grid = GridContext(-1.2, 1.2, -1.2, 1.2, n, n)
    nodes = sample_quasi_uniform(curve, m)
    return InterfaceWorkspace(grid, curve, nodes), grid, curve, nodes


@pytest.mark.parametrize("kappa", [0.0, 1.0])
def test_piecewise_quadratic_exactness(kappa):
    ws, grid, curve, nodes = _workspace()
    x, y = nodes.points.T
    gx, gy = _q_grad(x, y)
    spec = InterfaceSpec(
        kappa=kappa,
        f=lambda xx, yy: _q_lap() - kappa * _q(xx, yy),
        phi=_q(x, y),
        psi=nodes.normals[:, 0] * gx + nodes.normals[:, 1] * gy,
    )
    field, trace = ws.solve(spec)
    X, Y = grid.meshgrid()
    inside = ws.classification.inside
    err = np.abs(field[inside] - _q(X[inside], Y[inside])).max()
    assert err <= 1e-9, f"interior nodal error {err:.3e}"
    # exterior side of the exact solution is identically zero
    outside = ~inside
    ring = np.zeros_like(outside)
    ring[0, :] = ring[-1, :] = ring[:, 0] = ring[:, -1] = True
    assert np.abs(field[outside & ~ring]).max() <= 1e-9


def test_trace_exact_for_quadratic():
    ws, grid, curve, nodes = _workspace()
    x, y = nodes.points.T
    gx, gy = _q_grad(x, y)
    spec = InterfaceSpec(
        kappa=0.0,
        f=lambda xx, yy: np.full_like(xx, _q_lap()),
        phi=_q(x, y),
        psi=nodes.normals[:, 0] * gx + nodes.normals[:, 1] * gy,
    )
    _, trace = ws.solve(spec)
    assert np.abs(trace.values - _q(x, y)).max() <= 1e-9
    dn_exact = nodes.normals[:, 0] * gx + nodes.normals[:, 1] * gy
    assert np.abs(trace.normal_derivative - dn_exact).max() <= 1e-8


def test_trace_without_jumps_reads_smooth_field():
    # zero-jump interpolation of a globally quadratic grid field is exact
    ws, grid, curve, nodes = _workspace(n=48, m=96)
    X, Y = grid.meshgrid()
    field = _q(X, Y)
    from kfbi.jumps import jumps_from_density

    js = jumps_from_density(nodes, curve, 0.0)
    trace = ws.interpolate_trace(field, js)
    x, y = nodes.points.T
    assert np.abs(trace.values - _q(x, y)).max() < 1e-10
    gx, gy = _q_grad(x, y)
    dn = nodes.normals[:, 0] * gx + nodes.normals[:, 1] * gy
    assert np.abs(trace.normal_derivative - dn).max() < 1e-9


def test_solution_jump_across_interface():
    # pure value jump: the solved field should drop by about phi when
    # stepping from just inside to just outside the boundary
    ws, grid, curve, nodes = _workspace(n=128, m=128)
    phi = np.ones(nodes.count)
    field, trace = ws.solve(InterfaceSpec(kappa=0.0, phi=phi))
    assert np.abs(trace.values).max() < 2.0  # finite, sane scale
    inside = ws.classification.inside
    X, Y = grid.meshgrid()
    pts = np.column_stack([X[inside].ravel(), Y[inside].ravel()])
    # solved field is smooth where it should be: interior values bounded
    assert np.isfinite(field[inside]).all()


def test_self_convergence_order():
    # a non-polynomial jump problem: error should drop ~4x per refinement
    curve = build_curve(
        {"kind": "rotated-ellipse", "cx": 0.05, "cy": -0.02, "ra": 0.8, "rb": 0.8}
    )

    def exact(x, y):
        return np.exp(x) * np.cos(y)

    def run(n):
        grid = GridContext(-1.2, 1.2, -1.2, 1.2, n, n)
        nodes = sample_quasi_uniform(curve, max(n, 256))
        ws = InterfaceWorkspace(grid, curve, nodes)
        x, y = nodes.points.T
        gx = np.exp(x) * np.cos(y)
        gy = -np.exp(x) * np.sin(y)
        spec = InterfaceSpec(
            kappa=0.0,
            phi=exact(x, y),
            psi=nodes.normals[:, 0] * gx + nodes.normals[:, 1] * gy,
        )
        field, _ = ws.solve(spec)
        X, Y = grid.meshgrid()
        inside = ws.classification.inside
        return np.abs(field[inside] - exact(X[inside], Y[inside])).max()

    e1, e2 = run(64), run(128)
    order = np.log2(e1 / e2)
    assert order > 1.6, f"observed order {order:.2f} (errors {e1:.2e}, {e2:.2e})"


def test_workspace_reuse_matches_fresh():
    ws, grid, curve, nodes = _workspace(n=48, m=96)
    rng = np.random.default_rng(5)
    phi = rng.standard_normal(nodes.count)
    spec = InterfaceSpec(kappa=1.0, phi=phi)
    f1, t1 = ws.solve(spec)
    ws2 = InterfaceWorkspace(grid, curve, nodes)
    f2, t2 = ws2.solve(spec)
    assert np.array_equal(f1, f2)
    assert np.array_equal(t1.values, t2.values)


def test_corrected_rhs_zero_for_zero_jumps():
    ws, grid, curve, nodes = _workspace(n=48, m=96)
    from kfbi.jumps import jumps_from_density

    js = jumps_from_density(nodes, curve, 0.0)
    rhs = ws.corrected_rhs(InterfaceSpec(kappa=0.0), js)
    assert np.abs(rhs).max() == 0.0
