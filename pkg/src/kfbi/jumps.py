"""Jumps of the interface solution and its derivatives on the boundary.

Given the prescribed value jump, flux jump and source jump, the jumps of
all first and second partial derivatives follow from small linear
systems obtained by differentiating the jump conditions along the
boundary.  The flux identity is used with the normal-derivative jump
itself on the right-hand side (tau2*[w_x] - tau1*[w_y] = psi); its
arclength derivative appears only in the second-order system.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from kfbi.geometry import BoundaryCurve, BoundaryNodeSet, PeriodicCubicSpline

_QUANTITIES = ("w", "wx", "wy", "wxx", "wxy", "wyy")


def first_derivative_jumps(tau, dphi_ds, psi):
    """Solve for ([w_x], [w_y]) from the tangential and flux identities.

    The 2x2 system has determinant -(tau1^2 + tau2^2) = -1, so the
    solution is written in closed form.  Inputs broadcast.
    """
    t1, t2 = tau
    wx = t1 * dphi_ds + t2 * psi
    wy = t2 * dphi_ds - t1 * psi
    return wx, wy


def second_derivative_jumps(tau, dtau_ds, wx, wy, d2phi_ds2, dpsi_ds, f_jump, kappa, phi):
    """Solve the 3x3 system for ([w_xx], [w_xy], [w_yy]) at one node."""
    t1, t2 = tau
    dt1, dt2 = dtau_ds
    a = np.array(
        [
            [t1 * t1, 2 * t1 * t2, t2 * t2],
            [t1 * t2, t2 * t2 - t1 * t1, -t1 * t2],
            [1.0, 0.0, 1.0],
        ]
    )
    det = np.linalg.det(a)
    if abs(det) < 0.5:
        raise RuntimeError(f"degenerate jump system (|det|={abs(det):.3g}); tangent not unit?")
    b = np.array(
        [
            d2phi_ds2 - (dt1 * wx + dt2 * wy),
            dpsi_ds - dt2 * wx + dt1 * wy,
            f_jump + kappa * phi,
        ]
    )
    return tuple(np.linalg.solve(a, b))


@dataclass
class JumpSet:
    """All six jumps at the M boundary nodes, spline-representable in s."""

    nodes: BoundaryNodeSet
    w: np.ndarray
    wx: np.ndarray
    wy: np.ndarray
    wxx: np.ndarray
    wxy: np.ndarray
    wyy: np.ndarray

    @cached_property
    def _splines(self) -> dict[str, PeriodicCubicSpline]:
        s = self.nodes.arclengths
        L = self.nodes.total_length
        return {
            q: PeriodicCubicSpline(s, getattr(self, q), L) for q in _QUANTITIES
        }

    def at_arclength(self, s) -> dict[str, np.ndarray]:
        """Spline-interpolated jump values at arbitrary arclengths."""
        return {q: sp(s) for q, sp in self._splines.items()}


def jumps_from_density(
    nodes: BoundaryNodeSet,
    curve: BoundaryCurve,
    kappa: float,
    phi: np.ndarray | None = None,
    psi: np.ndarray | None = None,
    f_jump: np.ndarray | None = None,
) -> JumpSet:
    """Full jump set at the boundary nodes.

    ``phi`` is the value jump, ``psi`` the flux jump, ``f_jump`` the
    interior trace of the source (all per node; None means zero).
    Arclength derivatives of phi and psi come from periodic splines.
    """
    m = nodes.count
    s = nodes.arclengths
    L = nodes.total_length
    zero = np.zeros(m)
    phi = zero if phi is None else np.asarray(phi, dtype=float)
    psi = zero if psi is None else np.asarray(psi, dtype=float)
    f_jump = zero if f_jump is None else np.asarray(f_jump, dtype=float)

    if np.any(phi):
        sp_phi = PeriodicCubicSpline(s, phi, L)
        phi_s, phi_ss = sp_phi(s, nu=1), sp_phi(s, nu=2)
    else:
        phi_s = phi_ss = zero
    if np.any(psi):
        sp_psi = PeriodicCubicSpline(s, psi, L)
        psi_s = sp_psi(s, nu=1)
    else:
        psi_s = zero

    t1, t2 = nodes.tangents.T
    wx, wy = first_derivative_jumps((t1, t2), phi_s, psi)

    dtau = curve.tangent_arc_derivative(nodes.params)
    dt1, dt2 = dtau

    a = np.zeros((m, 3, 3))
    a[:, 0, 0] = t1 * t1
    a[:, 0, 1] = 2 * t1 * t2
    a[:, 0, 2] = t2 * t2
    a[:, 1, 0] = t1 * t2
    a[:, 1, 1] = t2 * t2 - t1 * t1
    a[:, 1, 2] = -t1 * t2
    a[:, 2, 0] = 1.0
    a[:, 2, 2] = 1.0
    b = np.stack(
        [
            phi_ss - (dt1 * wx + dt2 * wy),
            psi_s - dt2 * wx + dt1 * wy,
            f_jump + kappa * phi,
        ],
        axis=1,
    )
    second = np.linalg.solve(a, b[:, :, None])[:, :, 0]
    return JumpSet(
        nodes=nodes,
        w=phi,
        wx=wx,
        wy=wy,
        wxx=second[:, 0],
        wxy=second[:, 1],
        wyy=second[:, 2],
    )


def transfer_jumps_to_crossing(jumpset: JumpSet, s) -> dict[str, np.ndarray]:
    """Jump values at crossing arclengths, by periodic-spline interpolation."""
    return jumpset.at_arclength(np.asarray(s, dtype=float))
