"""Method-of-lines reference solver: WENO5 fluxes + SSP-RK3 under a CFL bound.

Semidiscrete form on a periodic cell-centered grid:

    du_i/dt = -(F_{i+1/2} - F_{i-1/2})/dx + delta(t, x_i)

The quadratic (advective) part of the flux goes through WENO5 reconstruction
with a local Lax-Friedrichs interface flux; the diffusion and dispersion
contributions use central finite differences.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..exceptions import SolutionBlowup, StepLimitExceeded
from ..pde import (
    ForcingTerm,
    Grid,
    PdeParams,
    PresetConfig,
    DEFAULT_PRESET_CONFIG,
    Trajectory,
    TrajectorySet,
    evaluate_forcing,
    initial_condition,
    make_preset,
)
from .stencils import fdm_derivative
from .weno import block_average, weno5_reconstruct

# Stability constant for the explicit third-derivative (dispersion) term:
# dt <= dx^3 / (|gamma| * DISPERSION_CFL). 3.0 bounds the spectral radius of
# the 4th-order stencil against the RK3 imaginary-axis stability limit.
DISPERSION_CFL = 3.0

# Accuracy of the central stencils for the diffusion/dispersion terms.
LINEAR_TERM_ACCURACY = 4


@dataclass(frozen=True)
class SolveConfig:
    """Knobs of the reference solver.

    fine_factor oversamples space relative to the saved grid; the solution
    is conservatively block-averaged back down when snapshots are stored.
    """

    cfl_number: float = 0.4
    fine_factor: int = 1
    max_steps: int = 10_000_000
    dt_max: float = 1.0
    fixed_dt: float | None = None  # bypass the CFL logic (convergence studies)

    def __post_init__(self):
        if not 0.0 < self.cfl_number <= 1.0:
            raise ValueError("cfl_number must lie in (0, 1]")
        if self.fine_factor < 1:
            raise ValueError("fine_factor must be >= 1")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


def cfl_dt(
    u: np.ndarray,
    params: PdeParams,
    dx: float,
    cfl: float,
    dt_max: float = 1.0,
) -> float:
    """Largest stable step: cfl * min over the active advective, diffusive,
    and dispersive limits, capped at dt_max (which also covers the
    all-coefficients-zero case)."""
    if not 0.0 < cfl <= 1.0:
        raise ValueError("cfl must lie in (0, 1]")
    limits = []
    if params.alpha != 0.0:
        speed = float(np.max(np.abs(2.0 * params.alpha * u)))
        if speed > 0.0:
            limits.append(dx / speed)
    if params.beta != 0.0:
        limits.append(dx**2 / (2.0 * params.beta))
    if params.gamma != 0.0:
        limits.append(dx**3 / (abs(params.gamma) * DISPERSION_CFL))
    if not limits:
        return dt_max
    return min(cfl * min(limits), dt_max)


def _advective_flux_divergence(u: np.ndarray, alpha: float, dx: float) -> np.ndarray:
    """(F_{i+1/2} - F_{i-1/2})/dx for the alpha*u^2 flux, periodic."""
    u_left, u_right = weno5_reconstruct(u)
    f_left = alpha * u_left**2
    f_right = alpha * u_right**2
    # Local Lax-Friedrichs dissipation speed: max |2*alpha*u| over the cells
    # feeding each interface (i-2 .. i+3).
    wave = np.abs(2.0 * alpha * u)
    local = wave.copy()
    for shift in (2, 1, -1, -2, -3):
        local = np.maximum(local, np.roll(wave, shift))
    f_iface = 0.5 * (f_left + f_right - local * (u_right - u_left))
    return (f_iface - np.roll(f_iface, 1)) / dx


def semidiscrete_rhs(
    u: np.ndarray,
    t: float,
    params: PdeParams,
    forcing: ForcingTerm,
    dx: float,
    x_centers: np.ndarray | None = None,
) -> np.ndarray:
    """du/dt on a periodic grid: flux divergence plus forcing."""
    u = np.asarray(u, dtype=np.float64)
    rhs = np.zeros_like(u)
    if params.alpha != 0.0:
        rhs -= _advective_flux_divergence(u, params.alpha, dx)
    if params.beta != 0.0:
        rhs += params.beta * fdm_derivative(u, 2, LINEAR_TERM_ACCURACY, dx, params.boundary)
    if params.gamma != 0.0:
        rhs -= params.gamma * fdm_derivative(u, 3, LINEAR_TERM_ACCURACY, dx, params.boundary)
    if forcing.components:
        if x_centers is None:
            x_centers = (np.arange(u.size) + 0.5) * dx
        rhs += evaluate_forcing(forcing, t, x_centers, params.domain_length)
    return rhs


def ssprk3_step(
    u: np.ndarray,
    t: float,
    dt: float,
    rhs: Callable[[np.ndarray, float], np.ndarray],
) -> np.ndarray:
    """One strong-stability-preserving third-order Runge-Kutta step."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    u1 = u + dt * rhs(u, t)
    u2 = 0.75 * u + 0.25 * u1 + 0.25 * dt * rhs(u1, t + dt)
    out = u / 3.0 + 2.0 / 3.0 * u2 + 2.0 / 3.0 * dt * rhs(u2, t + 0.5 * dt)
    if not np.all(np.isfinite(out)):
        raise SolutionBlowup(f"non-finite state after step at t={t!r}")
    return out


def solve_trajectory(
    params: PdeParams,
    forcing: ForcingTerm,
    grid: Grid,
    config: SolveConfig = SolveConfig(),
    ic: Callable[[np.ndarray], np.ndarray] | None = None,
) -> Trajectory:
    """Integrate one trajectory and save snapshots at grid.t_points.

    The solve runs on a grid oversampled by config.fine_factor; snapshots are
    block-averaged down to the saved resolution. Steps land exactly on each
    save time (dt is clamped, never interpolated). `ic` overrides the default
    initial condition delta(0, x); it receives cell-center coordinates.
    """
    fine = grid.refined(config.fine_factor)
    x_fine = fine.x_centers
    if ic is None:
        u = initial_condition(forcing, fine)
    else:
        u = np.asarray(ic(x_fine), dtype=np.float64)
        if u.shape != x_fine.shape:
            raise ValueError("ic must return one value per fine cell")
    if not np.all(np.isfinite(u)):
        raise SolutionBlowup("initial condition is non-finite")

    def rhs(state: np.ndarray, time: float) -> np.ndarray:
        return semidiscrete_rhs(state, time, params, forcing, fine.dx, x_fine)

    snapshots = np.empty((grid.n_t, fine.n_x))
    snapshots[0] = u
    t = 0.0
    steps = 0
    for k, t_save in enumerate(grid.t_points[1:], start=1):
        while t < t_save - 1e-12 * grid.t_end:
            if steps >= config.max_steps:
                raise StepLimitExceeded(
                    f"exceeded {config.max_steps} steps at t={t:.6g} of {grid.t_end:.6g}"
                )
            if config.fixed_dt is not None:
                dt = config.fixed_dt
            else:
                dt = cfl_dt(u, params, fine.dx, config.cfl_number, config.dt_max)
            dt = min(dt, t_save - t)
            u = ssprk3_step(u, t, dt, rhs)
            t += dt
            steps += 1
        t = t_save
        snapshots[k] = u

    return Trajectory(grid, params, forcing, block_average(snapshots, config.fine_factor))


def trajectory_seeds(master_seed: int, n: int) -> np.ndarray:
    """Deterministic per-trajectory seeds derived from one master seed."""
    return np.random.SeedSequence(master_seed).generate_state(n, dtype=np.uint32)


def generate_dataset(
    preset: str,
    n_trajectories: int,
    grid: Grid,
    seed: int,
    config: SolveConfig = SolveConfig(),
    preset_config: PresetConfig = DEFAULT_PRESET_CONFIG,
    threads: int = 1,
) -> TrajectorySet:
    """Solve n independent trajectories of a preset, deterministically.

    Per-trajectory seeds come from the master seed, so the result does not
    depend on `threads`; trajectories are ordered by index either way.
    """
    if n_trajectories < 1:
        raise ValueError("n_trajectories must be >= 1")
    seeds = trajectory_seeds(seed, n_trajectories)

    def solve_one(i: int) -> Trajectory:
        params, forcing = make_preset(preset, int(seeds[i]), preset_config)
        try:
            return solve_trajectory(params, forcing, grid, config)
        except (SolutionBlowup, StepLimitExceeded) as err:
            raise type(err)(f"trajectory {i}: {err}") from err

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trajectories = tuple(pool.map(solve_one, range(n_trajectories)))
    else:
        trajectories = tuple(solve_one(i) for i in range(n_trajectories))
    return TrajectorySet(preset=preset.lower(), seed=seed, trajectories=trajectories)
