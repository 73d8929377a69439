"""Uniform Cartesian grid and a fast direct solver for Delta - kappa*I.

Unknowns live at grid nodes; the outermost ring carries homogeneous
Dirichlet data and is eliminated, so the discrete operator is diagonal
in the 2D sine basis (DST-I) and a solve costs two transforms.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class GridContext:
    """Square-cell Cartesian grid on a rectangular bounding box."""

    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float
    nx: int  # cells in x; nodes are 0..nx
    ny: int  # cells in y

    def __post_init__(self):
        if self.nx < 8 or self.ny < 8:
            raise GridError("need at least 8 cells per direction")
        hx = (self.x_hi - self.x_lo) / self.nx
        hy = (self.y_hi - self.y_lo) / self.ny
        if abs(hx - hy) > 1e-14 * max(abs(hx), abs(hy)):
            raise GridError(f"cells must be square, got hx={hx!r} hy={hy!r}")

    @property
    def h(self) -> float:
        return (self.x_hi - self.x_lo) / self.nx

    @property
    def shape(self) -> tuple[int, int]:
        """Node-array shape, indexed [j, i] (row-major by j then i)."""
        return (self.ny + 1, self.nx + 1)

    @cached_property
    def xs(self) -> np.ndarray:
        return self.x_lo + self.h * np.arange(self.nx + 1)

    @cached_property
    def ys(self) -> np.ndarray:
        return self.y_lo + self.h * np.arange(self.ny + 1)

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates as (X, Y), each of shape ``self.shape``."""
        return np.meshgrid(self.xs, self.ys)

    def zero_field(self) -> np.ndarray:
        return np.zeros(self.shape)


# A GridField is a plain ndarray of shape grid.shape; the name is kept
# for documentation purposes.
GridField = np.ndarray


def _check_field(grid: GridContext, field: np.ndarray) -> np.ndarray:
    field = np.asarray(field, dtype=float)
    if field.shape != grid.shape:
        raise GridError(f"field shape {field.shape} != grid shape {grid.shape}")
    return field


def apply_operator(grid: GridContext, kappa: float, field: GridField) -> GridField:
    """Five-point discretization of Delta - kappa*I at interior nodes.

    The boundary ring of the result is identically zero.
    """
    if kappa < 0:
        raise GridError("kappa must be nonnegative")
    field = _check_field(grid, field)
    h2 = grid.h * grid.h
    out = grid.zero_field()
    c = field[1:-1, 1:-1]
    out[1:-1, 1:-1] = (
        field[1:-1, :-2] + field[1:-1, 2:] + field[:-2, 1:-1] + field[2:, 1:-1] - 4.0 * c
    ) / h2 - kappa * c
    return out


def sine_eigenvalues(grid: GridContext) -> np.ndarray:
    """Eigenvalues of the discrete Laplacian on interior sine modes.

    Entry [q-1, p-1] is -(4/h^2)(sin^2(p*pi/(2*nx)) + sin^2(q*pi/(2*ny))).
    """
    h2 = grid.h * grid.h
    p = np.arange(1, grid.nx)
    q = np.arange(1, grid.ny)
    sx = np.sin(p * np.pi / (2 * grid.nx)) ** 2
    sy = np.sin(q * np.pi / (2 * grid.ny)) ** 2
    return -(4.0 / h2) * (sy[:, None] + sx[None, :])


def fast_solve(grid: GridContext, kappa: float, rhs: GridField) -> GridField:
    """Direct solve of the five-point system with zero Dirichlet ring.

    Diagonalizes with DST-I in both directions; only interior rhs values
    matter, the returned ring is zero.
    """
    if kappa < 0:
        raise GridError("kappa must be nonnegative")
    rhs = _check_field(grid, rhs)
    interior = rhs[1:-1, 1:-1]
    coeff = scipy.fft.dstn(interior, type=1, norm="ortho")
    coeff /= sine_eigenvalues(grid) - kappa
    out = grid.zero_field()
    out[1:-1, 1:-1] = scipy.fft.idstn(coeff, type=1, norm="ortho")
    return out
