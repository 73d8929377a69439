"""Jump-system tests against closed-form polynomial oracles.

The oracle takes a polynomial difference function v(x, y), restricts it
to a circle, and derives the tangential data (d/ds of the restriction,
flux, ...) by the chain rule.  The solved derivative jumps must then
match the partial derivatives of v exactly.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kfbi.geometry import build_curve, sample_quasi_uniform
from kfbi.jumps import first_derivative_jumps, jumps_from_density, second_derivative_jumps


class Poly2D:
    """Dense bivariate polynomial with analytic derivatives."""

    def __init__(self, coeffs):
        self.c = np.asarray(coeffs, dtype=float)  # c[i, j] * x^i * y^j

    def __call__(self, x, y):
        return np.polynomial.polynomial.polyval2d(x, y, self.c)

    def dx(self):
        c = self.c
        out = np.zeros_like(c)
        if c.shape[0] > 1:
            out[:-1] = c[1:] * np.arange(1, c.shape[0])[:, None]
        return Poly2D(out)

    def dy(self):
        c = self.c
        out = np.zeros_like(c)
        if c.shape[1] > 1:
            out[:, :-1] = c[:, 1:] * np.arange(1, c.shape[1])[None, :]
        return Poly2D(out)


def _circle_frames(theta, r):
    """Position offset, tangent, normal and their arclength derivatives."""
    ct, s = np.cos(theta), np.sin(theta)
    tau = np.array([-s, ct])
    nrm = np.array([ct, s])
    dtau_ds = -nrm / r
    dnrm_ds = tau / r
    return tau, nrm, dtau_ds, dnrm_ds


def _oracle_case(rng):
    """One random configuration: circle point + cubic difference poly."""
    r = rng.uniform(0.5, 1.5)
    cx, cy = rng.uniform(-0.5, 0.5, size=2)
    theta = rng.uniform(0, 2 * np.pi)
    kappa = rng.choice([0.0, 2.37])
    v = Poly2D(rng.uniform(-1, 1, size=(4, 4)))
    x = cx + r * np.cos(theta)
    y = cy + r * np.sin(theta)
    tau, nrm, dtau_ds, dnrm_ds = _circle_frames(theta, r)

    vx, vy = v.dx(), v.dy()
    vxx, vxy, vyy = vx.dx(), vx.dy(), vy.dy()
    grad = np.array([vx(x, y), vy(x, y)])
    hess = np.array([[vxx(x, y), vxy(x, y)], [vxy(x, y), vyy(x, y)]])

    phi = v(x, y)
    dphi_ds = tau @ grad
    d2phi_ds2 = tau @ hess @ tau + dtau_ds @ grad
    psi = nrm @ grad
    dpsi_ds = dnrm_ds @ grad + nrm @ hess @ tau
    f_jump = vxx(x, y) + vyy(x, y) - kappa * phi

    truth = dict(
        wx=vx(x, y), wy=vy(x, y),
        wxx=vxx(x, y), wxy=vxy(x, y), wyy=vyy(x, y),
    )
    inputs = dict(
        tau=tuple(tau), dtau_ds=tuple(dtau_ds),
        dphi_ds=dphi_ds, d2phi_ds2=d2phi_ds2,
        psi=psi, dpsi_ds=dpsi_ds, f_jump=f_jump, kappa=kappa, phi=phi,
    )
    return inputs, truth


def test_jump_systems_match_polynomial_oracle():
    rng = np.random.default_rng(20240817)
    worst = 0.0
    for _ in range(50):
        inp, truth = _oracle_case(rng)
        wx, wy = first_derivative_jumps(inp["tau"], inp["dphi_ds"], inp["psi"])
        wxx, wxy, wyy = second_derivative_jumps(
            inp["tau"], inp["dtau_ds"], wx, wy,
            inp["d2phi_ds2"], inp["dpsi_ds"], inp["f_jump"], inp["kappa"], inp["phi"],
        )
        got = dict(wx=wx, wy=wy, wxx=wxx, wxy=wxy, wyy=wyy)
        for key in truth:
            worst = max(worst, abs(got[key] - truth[key]))
    assert worst <= 1e-8, f"worst oracle deviation {worst:.3e}"


def test_first_system_closed_form():
    # tangent along +x: [w_x] is the tangential slope, [w_y] is -flux
    wx, wy = first_derivative_jumps((1.0, 0.0), 2.0, 3.0)
    assert wx == pytest.approx(2.0) and wy == pytest.approx(-3.0)
    wx, wy = first_derivative_jumps((0.0, 1.0), 2.0, 3.0)
    assert wx == pytest.approx(3.0) and wy == pytest.approx(2.0)


def test_second_system_rejects_non_unit_tangent():
    with pytest.raises(RuntimeError):
        second_derivative_jumps((0.1, 0.1), (0, 0), 0, 0, 0, 0, 0, 0, 0)


def test_constant_value_jump_on_circle(unit_circle):
    nodes = sample_quasi_uniform(unit_circle, 64)
    js = jumps_from_density(nodes, unit_circle, kappa=2.0, phi=np.full(64, 1.5))
    assert np.abs(js.wx).max() < 1e-12 and np.abs(js.wy).max() < 1e-12
    # trace of the second-order system: [w_xx] + [w_yy] = kappa * phi
    assert np.abs(js.wxx + js.wyy - 3.0).max() < 1e-10


def test_density_jumps_match_analytic_on_circle(unit_circle):
    # phi = restriction of x^2*y, psi = flux of the same polynomial
    m = 1024
    nodes = sample_quasi_uniform(unit_circle, m)
    v = Poly2D(np.zeros((3, 2)))
    v.c[2, 1] = 1.0  # x^2 y
    x, y = nodes.points.T
    gx, gy = v.dx()(x, y), v.dy()(x, y)
    phi = v(x, y)
    psi = nodes.normals[:, 0] * gx + nodes.normals[:, 1] * gy
    f_jump = v.dx().dx()(x, y) + v.dy().dy()(x, y)
    js = jumps_from_density(nodes, unit_circle, kappa=0.0, phi=phi, psi=psi, f_jump=f_jump)
    # spline-based tangential derivatives limit the accuracy, not the solver
    assert np.abs(js.wx - gx).max() < 1e-6
    assert np.abs(js.wy - gy).max() < 1e-6
    assert np.abs(js.wxx - v.dx().dx()(x, y)).max() < 1e-4
    assert np.abs(js.wyy - v.dy().dy()(x, y)).max() < 1e-4


@settings(max_examples=20, deadline=None)
@given(a=st.floats(-3, 3, allow_nan=False), b=st.floats(-3, 3, allow_nan=False))
def test_jumps_linear_in_density(a, b):
    curve = build_curve({"kind": "rotated-ellipse", "ra": 1.0, "rb": 0.6})
    nodes = sample_quasi_uniform(curve, 48)
    rng = np.random.default_rng(7)
    phi1 = rng.standard_normal(48)
    phi2 = rng.standard_normal(48)
    j1 = jumps_from_density(nodes, curve, 1.0, phi=phi1)
    j2 = jumps_from_density(nodes, curve, 1.0, phi=phi2)
    jc = jumps_from_density(nodes, curve, 1.0, phi=a * phi1 + b * phi2)
    for q in ("w", "wx", "wy", "wxx", "wxy", "wyy"):
        lhs = getattr(jc, q)
        rhs = a * getattr(j1, q) + b * getattr(j2, q)
        assert np.abs(lhs - rhs).max() < 1e-7 * (abs(a) + abs(b) + 1)


def test_jumpset_spline_interpolation(unit_circle):
    nodes = sample_quasi_uniform(unit_circle, 128)
    phi = np.sin(2 * nodes.arclengths * 2 * np.pi / nodes.total_length)
    js = jumps_from_density(nodes, unit_circle, 0.0, phi=phi)
    # interpolation reproduces nodal values and is periodic
    at = js.at_arclength(nodes.arclengths)
    assert np.abs(at["w"] - phi).max() < 1e-12
    wrapped = js.at_arclength(nodes.arclengths + nodes.total_length)
    assert np.abs(wrapped["w"] - phi).max() < 1e-9
