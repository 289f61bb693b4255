"""Fifth-order WENO reconstruction of interface values from cell averages.

Classic Jiang-Shu formulation: three 3-cell candidate stencils, smoothness
indicators, and nonlinear weights alpha_k = d_k / (eps + beta_k)^2 with
linear weights d = (1/10, 6/10, 3/10).
"""

from __future__ import annotations

import numpy as np

from ..exceptions import GridTooSmall

WENO_EPS = 1e-6

_D0, _D1, _D2 = 0.1, 0.6, 0.3


def _weno5_left(u: np.ndarray, eps: float) -> np.ndarray:
    """Left-biased reconstruction at interface i+1/2 (periodic indexing)."""
    um2 = np.roll(u, 2)
    um1 = np.roll(u, 1)
    up1 = np.roll(u, -1)
    up2 = np.roll(u, -2)

    b0 = 13.0 / 12.0 * (um2 - 2.0 * um1 + u) ** 2 + 0.25 * (um2 - 4.0 * um1 + 3.0 * u) ** 2
    b1 = 13.0 / 12.0 * (um1 - 2.0 * u + up1) ** 2 + 0.25 * (um1 - up1) ** 2
    b2 = 13.0 / 12.0 * (u - 2.0 * up1 + up2) ** 2 + 0.25 * (3.0 * u - 4.0 * up1 + up2) ** 2

    a0 = _D0 / (eps + b0) ** 2
    a1 = _D1 / (eps + b1) ** 2
    a2 = _D2 / (eps + b2) ** 2
    asum = a0 + a1 + a2

    q0 = (2.0 * um2 - 7.0 * um1 + 11.0 * u) / 6.0
    q1 = (-um1 + 5.0 * u + 2.0 * up1) / 6.0
    q2 = (2.0 * u + 5.0 * up1 - up2) / 6.0
    return (a0 * q0 + a1 * q1 + a2 * q2) / asum


def weno5_reconstruct(
    cell_avgs: np.ndarray, eps: float = WENO_EPS
) -> tuple[np.ndarray, np.ndarray]:
    """Reconstruct (u_left, u_right) at every interface of a periodic grid.

    Index i of either output refers to the interface between cells i and
    i+1 (mod n_x): u_left[i] is biased on cells i-2..i+2, u_right[i] on
    cells i-1..i+3. Needs at least 6 cells.
    """
    u = np.asarray(cell_avgs, dtype=np.float64)
    if u.size < 6:
        raise GridTooSmall(f"WENO5 needs n_x >= 6, got {u.size}")
    u_left = _weno5_left(u, eps)
    # The right-biased value is the left-biased reconstruction of the
    # reversed array; interface j+1/2 of the reversed grid maps back to
    # interface (n-2-j)+1/2 of the original.
    u_right = np.roll(_weno5_left(u[::-1], eps)[::-1], -1)
    return u_left, u_right


def block_average(u: np.ndarray, factor: int) -> np.ndarray:
    """Conservatively downsample the trailing axis by averaging blocks."""
    if factor == 1:
        return np.asarray(u, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if u.shape[-1] % factor != 0:
        raise ValueError(f"axis size {u.shape[-1]} not divisible by factor {factor}")
    new_shape = u.shape[:-1] + (u.shape[-1] // factor, factor)
    return u.reshape(new_shape).mean(axis=-1)
