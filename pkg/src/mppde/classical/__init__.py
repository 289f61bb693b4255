"""Classical reference solver: stencils, WENO5 reconstruction, time stepping."""

from .solver import (
    DISPERSION_CFL,
    SolveConfig,
    cfl_dt,
    generate_dataset,
    semidiscrete_rhs,
    solve_trajectory,
    ssprk3_step,
    trajectory_seeds,
)
from .stencils import StencilCoeffs, central_stencil, fdm_derivative, pad_with_ghosts
from .weno import WENO_EPS, block_average, weno5_reconstruct

__all__ = [
    "DISPERSION_CFL",
    "SolveConfig",
    "StencilCoeffs",
    "WENO_EPS",
    "block_average",
    "central_stencil",
    "cfl_dt",
    "fdm_derivative",
    "generate_dataset",
    "pad_with_ghosts",
    "semidiscrete_rhs",
    "solve_trajectory",
    "ssprk3_step",
    "trajectory_seeds",
    "weno5_reconstruct",
]
