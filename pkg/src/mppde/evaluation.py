"""Shared metric harness: accumulated error, survival time, runtime sweeps.

Every solver in a sweep produces a full [n_t, n_x] trajectory estimate on
the target grid; the reference truth comes from the spatially oversampled
classical solve, block-averaged down to the same grid.
"""

from __future__ import annotations

import io
import json
import math
import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from .classical import SolveConfig, generate_dataset, solve_trajectory
from .exceptions import InsufficientHorizon, MissingCheckpoint, ShapeMismatch
from .model import MpPdeModel, build_graph, rollout
from .pde import DEFAULT_PRESET_CONFIG, Grid, PresetConfig, TrajectorySet

CSV_COLUMNS = ("preset", "n_t", "n_x", "solver", "seed", "acc_error", "survival_time", "runtime_ms")


def accumulated_error(pred: np.ndarray, truth: np.ndarray) -> float:
    """Sum over time of the spatial mean squared error."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ShapeMismatch(f"accumulated_error: {pred.shape} vs {truth.shape}")
    return float(np.mean((pred - truth) ** 2, axis=1).sum())


def survival_time(
    pred: np.ndarray, truth: np.ndarray, grid: Grid, threshold: float
) -> float:
    """Time of the first step whose spatial MSE exceeds the threshold.

    Returns t_end when the prediction never diverges that far.
    """
    if threshold <= 0.0:
        raise ValueError("threshold must be positive")
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ShapeMismatch(f"survival_time: {pred.shape} vs {truth.shape}")
    step_mse = np.mean((pred - truth) ** 2, axis=1)
    exceeded = np.nonzero(step_mse > threshold)[0]
    if exceeded.size == 0:
        return float(grid.t_end)
    return float(grid.t_points[exceeded[0]])


@dataclass(frozen=True)
class TrajectoryScore:
    accumulated_error: float
    survival_time: float
    runtime_ms: float


@dataclass(frozen=True)
class EvalCell:
    """One (preset, resolution, solver, seed) sweep point."""

    preset: str
    n_t: int
    n_x: int
    solver: str
    seed: int
    scores: tuple[TrajectoryScore, ...]

    def _agg(self, attr: str) -> tuple[float, float]:
        values = [getattr(s, attr) for s in self.scores]
        return float(np.mean(values)), float(np.std(values))

    @property
    def acc_error(self) -> float:
        return self._agg("accumulated_error")[0]

    @property
    def survival(self) -> float:
        return self._agg("survival_time")[0]

    @property
    def runtime_ms(self) -> float:
        return self._agg("runtime_ms")[0]

    def aggregates(self) -> dict:
        out = {}
        for attr in ("accumulated_error", "survival_time", "runtime_ms"):
            mean, std = self._agg(attr)
            out[attr] = {"mean": mean, "std": std}
        return out


@dataclass(frozen=True)
class ExperimentSpec:
    preset: str
    resolutions: tuple[tuple[int, int], ...]  # (n_t, n_x) pairs
    solvers: tuple[str, ...]
    seeds: tuple[int, ...]
    n_trajectories: int = 1
    threshold: float = 0.01
    domain_length: float = 16.0
    t_end: float = 4.0
    timing_repeats: int = 3
    reference_config: SolveConfig = field(default_factory=lambda: SolveConfig(fine_factor=4))
    solver_config: SolveConfig = field(default_factory=SolveConfig)
    preset_config: PresetConfig = field(default_factory=lambda: DEFAULT_PRESET_CONFIG)


@dataclass(frozen=True)
class EvalReport:
    spec: ExperimentSpec
    cells: tuple[EvalCell, ...]


def _median_runtime(fn, repeats: int):
    """Run fn `repeats` times; return (last result, median wall ms)."""
    times = []
    result = None
    for _ in range(max(1, repeats)):
        t0 = time.perf_counter()
        result = fn()
        times.append((time.perf_counter() - t0) * 1e3)
    return result, statistics.median(times)


def _solver_estimates(
    solver: str,
    truth: TrajectorySet,
    spec: ExperimentSpec,
    models: dict[str, MpPdeModel],
    ic=None,
) -> list[tuple[np.ndarray, float]]:
    """Full [n_t, n_x] estimate plus runtime for each trajectory of a cell."""
    grid = truth.grid
    out = []
    if solver == "truth":
        for traj in truth:
            out.append((traj.u, 0.0))
        return out
    if solver == "weno5":
        for traj in truth:
            est, ms = _median_runtime(
                lambda t=traj: solve_trajectory(
                    t.params, t.forcing, grid, spec.solver_config, ic=ic
                ),
                spec.timing_repeats,
            )
            out.append((est.u, ms))
        return out
    model = models.get(solver)
    if model is None:
        raise MissingCheckpoint(f"no checkpoint supplied for solver {solver!r}")
    k = model.config.bundle_size
    if grid.n_t <= k:
        raise InsufficientHorizon(f"n_t={grid.n_t} leaves nothing to predict for K={k}")
    steps = math.ceil((grid.n_t - k) / k)
    for traj in truth:
        graph = build_graph(grid.n_x, model.config.neighborhood_radius, traj.params.boundary)
        window = traj.u[:k]
        pred, ms = _median_runtime(
            lambda w=window, t=traj: rollout(model, w, grid, t.params, steps, graph),
            spec.timing_repeats,
        )
        est = np.vstack([window, pred])[: grid.n_t]
        out.append((est, ms))
    return out


def evaluate_cells(
    truth: TrajectorySet,
    spec: ExperimentSpec,
    seed: int,
    models: dict[str, MpPdeModel] | None = None,
    ic=None,
) -> list[EvalCell]:
    """Score every solver of the spec against one pre-built truth set."""
    models = models or {}
    grid = truth.grid
    cells = []
    for solver in spec.solvers:
        scores = []
        estimates = _solver_estimates(solver, truth, spec, models, ic=ic)
        for traj, (est, ms) in zip(truth, estimates):
            scores.append(
                TrajectoryScore(
                    accumulated_error=accumulated_error(est, traj.u),
                    survival_time=survival_time(est, traj.u, grid, spec.threshold),
                    runtime_ms=ms,
                )
            )
        cells.append(
            EvalCell(
                preset=truth.preset,
                n_t=grid.n_t,
                n_x=grid.n_x,
                solver=solver,
                seed=seed,
                scores=tuple(scores),
            )
        )
    return cells


def run_experiment(
    spec: ExperimentSpec,
    models: dict[str, MpPdeModel] | None = None,
) -> EvalReport:
    """Sweep (resolution x solver x seed) cells against oversampled truth.

    Deterministic given the spec's seeds, except the runtime fields.
    """
    cells = []
    for n_t, n_x in spec.resolutions:
        grid = Grid(n_x=n_x, n_t=n_t, domain_length=spec.domain_length, t_end=spec.t_end)
        for seed in spec.seeds:
            truth = generate_dataset(
                spec.preset,
                spec.n_trajectories,
                grid,
                seed,
                spec.reference_config,
                spec.preset_config,
            )
            cells.extend(evaluate_cells(truth, spec, seed, models))
    return EvalReport(spec=spec, cells=tuple(cells))


def report_to_csv(report: EvalReport) -> str:
    """One row per cell, stable column order, repr-round-trip floats."""
    buf = io.StringIO()
    buf.write(",".join(CSV_COLUMNS) + "\n")
    for c in report.cells:
        row = (
            c.preset,
            str(c.n_t),
            str(c.n_x),
            c.solver,
            str(c.seed),
            repr(c.acc_error),
            repr(c.survival),
            repr(c.runtime_ms),
        )
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def report_rows_from_csv(text: str) -> list[dict]:
    """Parse the CSV emitted by report_to_csv back into typed row dicts."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = tuple(lines[0].split(","))
    if header != CSV_COLUMNS:
        raise ValueError(f"unexpected CSV header {header}")
    rows = []
    for line in lines[1:]:
        parts = line.split(",")
        rows.append(
            {
                "preset": parts[0],
                "n_t": int(parts[1]),
                "n_x": int(parts[2]),
                "solver": parts[3],
                "seed": int(parts[4]),
                "acc_error": float(parts[5]),
                "survival_time": float(parts[6]),
                "runtime_ms": float(parts[7]),
            }
        )
    return rows


def report_to_json(report: EvalReport) -> str:
    """Aggregates plus per-trajectory detail for every cell."""
    spec = report.spec
    doc = {
        "preset": spec.preset,
        "threshold": spec.threshold,
        "n_trajectories": spec.n_trajectories,
        "seeds": list(spec.seeds),
        "cells": [
            {
                "preset": c.preset,
                "n_t": c.n_t,
                "n_x": c.n_x,
                "solver": c.solver,
                "seed": c.seed,
                "aggregates": c.aggregates(),
                "trajectories": [
                    {
                        "accumulated_error": s.accumulated_error,
                        "survival_time": s.survival_time,
                        "runtime_ms": s.runtime_ms,
                    }
                    for s in c.scores
                ],
            }
            for c in report.cells
        ],
    }
    return json.dumps(doc, indent=2) + "\n"
