"""Curve, node-placement and grid-classification tests."""

import numpy as np
import pytest
from scipy.integrate import quad

from kfbi.geometry import (
    ClassificationError,
    CurveError,
    build_curve,
    classify_nodes,
    sample_quasi_uniform,
)
from kfbi.grid import GridContext

from conftest import ELLIPSE_DESC


def test_unit_circle_parametrization(unit_circle):
    t = np.linspace(0, 2 * np.pi, 17)
    pos = unit_circle.position(t)
    assert np.abs(pos[0] - np.cos(t)).max() < 1e-12
    assert np.abs(pos[1] - np.sin(t)).max() < 1e-12


def test_ellipse_position_formula(ellipse_curve):
    # x = cx + ra cos(a) cos(t) - rb sin(a) sin(t), standard rotation
    cx, cy, ra, rb, al = 0.2, 0.4, 1.0, 0.5, np.pi / 7
    t = np.array([0.3, 1.1, 4.0])
    x, y = ellipse_curve.position(t)
    assert np.allclose(x, cx + ra * np.cos(al) * np.cos(t) - rb * np.sin(al) * np.sin(t))
    assert np.allclose(y, cy + ra * np.sin(al) * np.cos(t) + rb * np.cos(al) * np.sin(t))


@pytest.mark.parametrize(
    "desc",
    [
        ELLIPSE_DESC,
        {"kind": "star", "arms": 5, "amplitude": 0.15},
        {"kind": "star", "arms": 3, "amplitude": 0.20, "rotate": 0.4, "scale": 0.9},
    ],
)
def test_normals_point_outward(desc):
    curve = build_curve(dict(desc))
    t = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    p = curve.position(t).T
    n = curve.normal(t).T
    eps = 1e-4
    assert not curve.contains(p + eps * n).any()
    assert curve.contains(p - eps * n).all()


def test_tangent_unit_and_orthogonal(ellipse_curve):
    t = np.linspace(0, 2 * np.pi, 40, endpoint=False)
    tau = ellipse_curve.tangent(t)
    n = ellipse_curve.normal(t)
    assert np.abs(np.einsum("in,in->n", tau, tau) - 1).max() < 1e-12
    assert np.abs(np.einsum("in,in->n", tau, n)).max() < 1e-12


def test_circle_arclength_exact(unit_circle):
    assert unit_circle.length == pytest.approx(2 * np.pi, rel=1e-10)
    s = unit_circle.arclength(np.array([0.5, 1.7]))
    assert np.allclose(s, [0.5, 1.7], rtol=1e-10)


def test_star_arclength_matches_adaptive_quadrature():
    curve = build_curve({"kind": "star", "arms": 5, "amplitude": 0.05})
    ref, _ = quad(lambda t: float(curve.speed(np.array([t]))[0]), 0.0, 2 * np.pi, limit=200)
    assert abs(curve.length - ref) < 1e-6 * ref


def test_scale_multiplies_length(ellipse_curve):
    scaled = build_curve(dict(ELLIPSE_DESC, scale=1.7))
    assert scaled.length == pytest.approx(1.7 * ellipse_curve.length, rel=1e-9)


def test_rotation_preserves_length(ellipse_curve):
    rot = build_curve(dict(ELLIPSE_DESC, rotate=0.9))
    assert rot.length == pytest.approx(ellipse_curve.length, rel=1e-9)


def test_spline_curve_interpolates_control_points():
    theta = np.linspace(0, 2 * np.pi, 12, endpoint=False)
    pts = np.column_stack([np.cos(theta), 0.7 * np.sin(theta)])
    curve = build_curve({"kind": "spline", "control_points": pts})
    # control points must lie on the curve
    dense = curve.position(np.linspace(0, 2 * np.pi, 4000, endpoint=False)).T
    for p in pts:
        assert np.min(np.linalg.norm(dense - p, axis=1)) < 1e-3


def test_spline_perturbation_moves_curve():
    theta = np.linspace(0, 2 * np.pi, 10, endpoint=False)
    pts = np.column_stack([np.cos(theta), np.sin(theta)])
    base = build_curve({"kind": "spline", "control_points": pts})
    moved = build_curve(
        {"kind": "spline", "control_points": pts, "perturb": [(2, 0.05, -0.03)]}
    )
    d = np.abs(base.position(theta) - moved.position(theta))
    assert d.max() > 1e-3


def test_invalid_curves_rejected():
    with pytest.raises(CurveError):
        build_curve({"kind": "star", "arms": 7, "amplitude": 0.1})
    with pytest.raises(CurveError):
        build_curve({"kind": "star", "arms": 4, "amplitude": 0.5})
    with pytest.raises(CurveError):
        build_curve({"kind": "rotated-ellipse", "ra": -1.0, "rb": 0.5})
    with pytest.raises(CurveError):
        build_curve({"kind": "hexagon"})


def test_quasi_uniform_nodes(ellipse_curve):
    nodes = sample_quasi_uniform(ellipse_curve, 96)
    assert nodes.count == 96
    # exact equal arclength spacing
    gaps = np.diff(nodes.arclengths)
    assert np.abs(gaps - nodes.total_length / 96).max() < 1e-12
    # node positions actually sit at those arclengths
    s_check = ellipse_curve.arclength(nodes.params)
    assert np.abs(s_check - nodes.arclengths).max() < 1e-8
    # unit normals
    assert np.abs(np.linalg.norm(nodes.normals, axis=1) - 1).max() < 1e-12


def _circle(r=0.8, cx=0.05, cy=-0.02):
    return build_curve(
        {"kind": "rotated-ellipse", "cx": cx, "cy": cy, "ra": r, "rb": r, "alpha": 0.0}
    )


def test_classification_area_and_consistency():
    grid = GridContext(-1.2, 1.2, -1.2, 1.2, 96, 96)
    curve = _circle()
    cls = classify_nodes(grid, curve)
    area = cls.inside.sum() * grid.h**2
    assert abs(area - np.pi * 0.8**2) < 0.05
    # crossed edges straddle the interface
    ins = cls.inside
    xe, ye = cls.x_edges, cls.y_edges
    assert np.all(ins[xe.j, xe.i] != ins[xe.j, xe.i + 1])
    assert np.all(ins[ye.j, ye.i] != ins[ye.j + 1, ye.i])
    assert np.all((xe.frac > 0) & (xe.frac < 1))
    assert np.all((ye.frac > 0) & (ye.frac < 1))
    # every irregular node touches a crossed edge
    assert cls.irregular[xe.j, xe.i].all() and cls.irregular[ye.j, ye.i + 0].all()


def test_classification_crossing_positions_on_curve():
    grid = GridContext(-1.2, 1.2, -1.2, 1.2, 64, 64)
    curve = _circle()
    cls = classify_nodes(grid, curve)
    # horizontal-edge crossings: y = ys[j], x = xs[i] + frac*h must lie on the circle
    x = grid.xs[cls.x_edges.i] + cls.x_edges.frac * grid.h
    y = grid.ys[cls.x_edges.j]
    r = np.hypot(x - 0.05, y + 0.02)
    assert np.abs(r - 0.8).max() < 1e-9


def test_classification_resolves_tangency():
    # circle tangent to the grid line y = -0.9 at this resolution
    grid = GridContext(-1.2, 1.2, -1.2, 1.2, 128, 128)
    curve = _circle(r=0.8, cx=0.1, cy=-0.1)
    cls = classify_nodes(grid, curve)
    assert cls.inside.any()


def test_classification_requires_clearance():
    grid = GridContext(-1.0, 1.0, -1.0, 1.0, 64, 64)
    with pytest.raises(ClassificationError):
        classify_nodes(grid, _circle(r=0.99, cx=0.0, cy=0.0))
