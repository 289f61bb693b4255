"""Benchmark PDE family: coefficients, forcing, grids, trajectories.

The equations solved here are 1D conservation laws

    du/dt + d/dx( alpha*u^2 - beta*du/dx + gamma*d2u/dx2 ) = delta(t, x)

with the forcing delta realized as a finite sum of travelling sinusoids.
The initial condition is the forcing evaluated at t = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import SolutionBlowup

PERIODIC = "periodic"
DIRICHLET = "dirichlet"
NEUMANN = "neumann"
BOUNDARY_KINDS = (PERIODIC, DIRICHLET, NEUMANN)


@dataclass(frozen=True)
class Boundary:
    """Boundary condition: periodic, or Dirichlet/Neumann with a value."""

    kind: str = PERIODIC
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in BOUNDARY_KINDS:
            raise ValueError(f"unknown boundary kind {self.kind!r}")
        if not math.isfinite(self.value):
            raise ValueError("boundary value must be finite")

    @property
    def is_periodic(self) -> bool:
        return self.kind == PERIODIC


@dataclass(frozen=True)
class PdeParams:
    """Coefficient triple (alpha, beta, gamma) plus domain metadata.

    alpha scales the quadratic advection flux, beta the diffusion
    (must be >= 0: negative diffusion is ill-posed), gamma the dispersion.
    """

    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0
    domain_length: float = 16.0
    boundary: Boundary = field(default_factory=Boundary)

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "domain_length"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.beta < 0.0:
            raise ValueError("beta must be >= 0 (negative diffusion is ill-posed)")
        if self.domain_length <= 0.0:
            raise ValueError("domain_length must be positive")


def flux(u_point, du_dx, d2u_dx2, params: PdeParams):
    """Pointwise flux J = alpha*u^2 - beta*du/dx + gamma*d2u/dx2.

    Accepts scalars or arrays (broadcasting elementwise).
    """
    return params.alpha * u_point**2 - params.beta * du_dx + params.gamma * d2u_dx2


@dataclass(frozen=True)
class ForcingComponent:
    amplitude: float
    omega: float            # temporal angular frequency
    wavenumber: int         # spatial mode index
    phase: float            # in [0, 2*pi)


@dataclass(frozen=True)
class ForcingTerm:
    """Sum of sinusoids: sum_j A_j * sin(w_j*t + 2*pi*l_j*x/L + phi_j).

    An empty component list is the zero forcing.
    """

    components: tuple[ForcingComponent, ...] = ()

    def __call__(self, t: float, x, domain_length: float):
        return evaluate_forcing(self, t, x, domain_length)

    @property
    def amplitude_bound(self) -> float:
        """Upper bound on |delta(t, x)| for any (t, x)."""
        return sum(abs(c.amplitude) for c in self.components)


ZERO_FORCING = ForcingTerm()


def evaluate_forcing(forcing: ForcingTerm, t: float, x, domain_length: float):
    """Evaluate delta(t, x); x may be a scalar or an array."""
    if domain_length <= 0.0:
        raise ValueError("domain_length must be positive")
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    for c in forcing.components:
        out = out + c.amplitude * np.sin(
            c.omega * t + 2.0 * np.pi * c.wavenumber * x / domain_length + c.phase
        )
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered space/time grid.

    Cell centers sit at (i + 0.5)*dx; saved times are uniform on [0, t_end].
    Values on the grid are interpreted as cell averages.
    """

    n_x: int
    n_t: int
    domain_length: float
    t_end: float

    def __post_init__(self):
        if self.n_x < 1 or self.n_t < 2:
            raise ValueError("need n_x >= 1 and n_t >= 2")
        if self.domain_length <= 0.0 or self.t_end <= 0.0:
            raise ValueError("domain_length and t_end must be positive")

    @property
    def dx(self) -> float:
        return self.domain_length / self.n_x

    @property
    def x_centers(self) -> np.ndarray:
        return (np.arange(self.n_x) + 0.5) * self.dx

    @property
    def t_points(self) -> np.ndarray:
        return np.linspace(0.0, self.t_end, self.n_t)

    def refined(self, factor: int) -> "Grid":
        """Same domain with factor-times more spatial cells."""
        return Grid(self.n_x * factor, self.n_t, self.domain_length, self.t_end)


def initial_condition(forcing: ForcingTerm, grid: Grid) -> np.ndarray:
    """u(0, x) = delta(0, x) sampled at every cell center."""
    return np.asarray(
        evaluate_forcing(forcing, 0.0, grid.x_centers, grid.domain_length),
        dtype=np.float64,
    )


@dataclass(frozen=True)
class Trajectory:
    """One solved trajectory u[t][x] with its grid and equation metadata."""

    grid: Grid
    params: PdeParams
    forcing: ForcingTerm
    u: np.ndarray  # shape [n_t, n_x]

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64)
        if u.shape != (self.grid.n_t, self.grid.n_x):
            raise ValueError(
                f"u has shape {u.shape}, expected {(self.grid.n_t, self.grid.n_x)}"
            )
        if not np.all(np.isfinite(u)):
            raise SolutionBlowup("trajectory contains non-finite values")
        object.__setattr__(self, "u", u)


@dataclass(frozen=True)
class TrajectorySet:
    """A dataset of trajectories sharing one grid and preset."""

    preset: str
    seed: int
    trajectories: tuple[Trajectory, ...]

    def __post_init__(self):
        if not self.trajectories:
            raise ValueError("a TrajectorySet needs at least one trajectory")
        grid = self.trajectories[0].grid
        for traj in self.trajectories:
            if traj.grid != grid:
                raise ValueError("all trajectories must share one grid")

    def __len__(self) -> int:
        return len(self.trajectories)

    def __iter__(self):
        return iter(self.trajectories)

    def __getitem__(self, i: int) -> Trajectory:
        return self.trajectories[i]

    @property
    def grid(self) -> Grid:
        return self.trajectories[0].grid

    def payload(self) -> np.ndarray:
        """Stacked solution array of shape [n_traj, n_t, n_x]."""
        return np.stack([t.u for t in self.trajectories])


PRESET_NAMES = ("e1", "e2", "e3")


@dataclass(frozen=True)
class PresetConfig:
    """Sampling ranges behind the e1/e2/e3 presets; everything overridable.

    e1: fixed alpha, no diffusion, no dispersion.
    e2: fixed alpha, diffusion drawn per trajectory, no dispersion.
    e3: all three coefficients drawn per trajectory.
    """

    alpha_fixed: float = 0.5
    alpha_range: tuple[float, float] = (0.0, 1.0)
    beta_range: tuple[float, float] = (0.0, 0.2)
    gamma_range: tuple[float, float] = (0.0, 1.0)
    domain_length: float = 16.0
    n_components: int = 5
    amplitude_range: tuple[float, float] = (-0.5, 0.5)
    omega_range: tuple[float, float] = (-0.4, 0.4)
    wavenumbers: tuple[int, ...] = (1, 2, 3)


DEFAULT_PRESET_CONFIG = PresetConfig()


def sample_forcing(rng: np.random.Generator, config: PresetConfig) -> ForcingTerm:
    """Draw forcing components from the configured distributions."""
    comps = []
    for _ in range(config.n_components):
        comps.append(
            ForcingComponent(
                amplitude=float(rng.uniform(*config.amplitude_range)),
                omega=float(rng.uniform(*config.omega_range)),
                wavenumber=int(rng.choice(config.wavenumbers)),
                phase=float(rng.uniform(0.0, 2.0 * np.pi)),
            )
        )
    return ForcingTerm(tuple(comps))


def make_preset(
    name: str,
    rng_seed: int,
    config: PresetConfig = DEFAULT_PRESET_CONFIG,
) -> tuple[PdeParams, ForcingTerm]:
    """Sample (params, forcing) for one trajectory of the named preset.

    Identical (name, rng_seed, config) yield identical output. Coefficients
    are drawn before the forcing so the streams stay aligned across presets.
    """
    name = name.lower()
    if name not in PRESET_NAMES:
        raise ValueError(f"unknown preset {name!r}, expected one of {PRESET_NAMES}")
    rng = np.random.default_rng(rng_seed)
    if name == "e1":
        alpha, beta, gamma = config.alpha_fixed, 0.0, 0.0
    elif name == "e2":
        alpha = config.alpha_fixed
        beta = float(rng.uniform(*config.beta_range))
        gamma = 0.0
    else:
        alpha = float(rng.uniform(*config.alpha_range))
        beta = float(rng.uniform(*config.beta_range))
        gamma = float(rng.uniform(*config.gamma_range))
    params = PdeParams(
        alpha=alpha, beta=beta, gamma=gamma, domain_length=config.domain_length
    )
    return params, sample_forcing(rng, config)
