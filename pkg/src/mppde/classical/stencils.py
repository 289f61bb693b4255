"""Finite-difference stencils built from exact Taylor moment conditions.

A stencil approximates d^n u / dx^n at a point as a weighted combination of
neighboring values: sum_i a_i * u[x + offset_i * dx] / dx^n. The weights are
solved in rational arithmetic so the moment conditions hold exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ..exceptions import GridTooSmall
from ..pde import DIRICHLET, NEUMANN, PERIODIC, Boundary


def _solve_rational(matrix, rhs):
    """Gaussian elimination over Fractions (exact, with partial pivoting)."""
    n = len(rhs)
    a = [row[:] + [rhs[i]] for i, row in enumerate(matrix)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if a[r][col] != 0), None)
        if pivot is None:
            raise ValueError("singular moment system")
        a[col], a[pivot] = a[pivot], a[col]
        inv = Fraction(1, 1) / a[col][col]
        a[col] = [v * inv for v in a[col]]
        for r in range(n):
            if r != col and a[r][col] != 0:
                factor = a[r][col]
                a[r] = [v - factor * p for v, p in zip(a[r], a[col])]
    return [a[r][n] for r in range(n)]


@dataclass(frozen=True)
class StencilCoeffs:
    """Weights a_i (exact rationals) for d^n/dx^n on offsets around a point.

    The weights are dimensionless; divide the weighted sum by dx**n to get
    the derivative. Moment conditions are verified exactly at construction.
    """

    offsets: tuple[int, ...]
    weights: tuple[Fraction, ...]
    derivative_order: int

    def __post_init__(self):
        n_conditions = len(self.offsets)
        for k in range(n_conditions):
            total = sum(
                w * Fraction(o, 1) ** k / math.factorial(k)
                for w, o in zip(self.weights, self.offsets)
            )
            expected = Fraction(1, 1) if k == self.derivative_order else Fraction(0, 1)
            if total != expected:
                raise ValueError(
                    f"moment condition k={k} violated: got {total}, want {expected}"
                )

    @property
    def coeffs(self) -> np.ndarray:
        """Weights as floats (to be scaled by 1/dx**n)."""
        return np.array([float(w) for w in self.weights])

    @property
    def half_width(self) -> int:
        return max(abs(o) for o in self.offsets)


def central_stencil(order: int, accuracy: int) -> StencilCoeffs:
    """Symmetric central stencil for derivative `order` at even `accuracy`."""
    if order < 1:
        raise ValueError("derivative order must be >= 1")
    if accuracy < 2 or accuracy % 2 != 0:
        raise ValueError("accuracy must be even and >= 2")
    half = (order + 1) // 2 + accuracy // 2 - 1
    offsets = tuple(range(-half, half + 1))
    matrix = [
        [Fraction(o, 1) ** k / math.factorial(k) for o in offsets]
        for k in range(len(offsets))
    ]
    rhs = [Fraction(1 if k == order else 0, 1) for k in range(len(offsets))]
    weights = tuple(_solve_rational(matrix, rhs))
    return StencilCoeffs(offsets, weights, order)


def pad_with_ghosts(u: np.ndarray, width: int, boundary: Boundary, dx: float) -> np.ndarray:
    """Extend a cell-centered array by `width` ghost cells on each side.

    Periodic wraps; Dirichlet fills the boundary value; Neumann reflects the
    interior with the prescribed slope (pure mirror when the slope is zero).
    """
    if boundary.kind == PERIODIC:
        return np.concatenate([u[-width:], u, u[:width]])
    if u.size < width:
        raise GridTooSmall(f"need at least {width} cells to fill ghosts")
    if boundary.kind == DIRICHLET:
        edge = np.full(width, boundary.value)
        return np.concatenate([edge, u, edge])
    if boundary.kind == NEUMANN:
        # ghost -1-j mirrors cell j across the face, center distance (2j+1)*dx
        g = boundary.value
        j = np.arange(width)
        left = u[:width][::-1] - g * dx * (2 * j[::-1] + 1)
        right = u[-width:][::-1] + g * dx * (2 * j + 1)
        return np.concatenate([left, u, right])
    raise ValueError(f"unknown boundary kind {boundary.kind!r}")


def fdm_derivative(
    u: np.ndarray,
    order: int,
    accuracy: int,
    dx: float,
    boundary: Boundary = Boundary(),
) -> np.ndarray:
    """Apply a central finite-difference stencil to every grid point.

    Periodic boundaries wrap indices modulo n_x; Dirichlet/Neumann use ghost
    cells. Raises GridTooSmall when the stencil does not fit.
    """
    u = np.asarray(u, dtype=np.float64)
    if order not in (1, 2, 3):
        raise ValueError("order must be in {1, 2, 3}")
    stencil = central_stencil(order, accuracy)
    width = stencil.half_width
    if u.size <= order + accuracy:
        raise GridTooSmall(
            f"n_x={u.size} too small for order={order}, accuracy={accuracy}"
        )
    padded = pad_with_ghosts(u, width, boundary, dx)
    out = np.zeros_like(u)
    for off, w in zip(stencil.offsets, stencil.coeffs):
        out += w * padded[width + off : width + off + u.size]
    return out / dx**order
