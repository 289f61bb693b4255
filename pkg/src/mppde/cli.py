"""Command-line entry point: gen-data, solve, train, eval, compare.

Configuration precedence is defaults < --config file < explicit flags; the
effective configuration is echoed into every output's metadata. Exit codes:
2 invalid arguments or inputs, 3 solver/training failure, 4 missing
checkpoint.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .classical import SolveConfig, generate_dataset, solve_trajectory
from .evaluation import (
    EvalReport,
    ExperimentSpec,
    evaluate_cells,
    report_to_csv,
    report_to_json,
    run_experiment,
)
from .exceptions import (
    FormatError,
    InsufficientHorizon,
    MissingCheckpoint,
    MppdeError,
    SolutionBlowup,
    StepLimitExceeded,
)
from .model import ModelConfig, init_model
from .pde import PRESET_NAMES, Grid, PdeParams, TrajectorySet, ZERO_FORCING, make_preset
from .storage import (
    dataset_hash,
    load_checkpoint,
    load_dataset,
    meta_path,
    payload_path,
    save_checkpoint,
    save_dataset,
    save_train_log,
)
from .training import TrainConfig, train, valid_start_range

EXIT_USAGE = 2
EXIT_SOLVER = 3
EXIT_CHECKPOINT = 4

IC_KINDS = ("forcing", "sine", "zero")


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    return int(os.environ.get("MPPDE_THREADS", "1"))


def _apply_config_file(args: argparse.Namespace, parser_defaults: dict) -> dict:
    """defaults < config file < flags; returns the effective settings."""
    effective = dict(parser_defaults)
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise FormatError(f"config file {path} does not exist")
        overrides = json.loads(path.read_text())
        unknown = set(overrides) - set(parser_defaults)
        if unknown:
            raise FormatError(f"config file sets unknown keys: {sorted(unknown)}")
        effective.update(overrides)
    for key in parser_defaults:
        value = getattr(args, key, None)
        if value is not None:
            effective[key] = value
    return effective


def _solve_config(cfg: dict, default_fine: int) -> SolveConfig:
    return SolveConfig(
        cfl_number=cfg["cfl"],
        fine_factor=cfg["fine_factor"] if cfg["fine_factor"] is not None else default_fine,
        max_steps=cfg["max_steps"],
    )


def _ic_callable(kind: str, domain_length: float):
    if kind == "forcing":
        return None
    if kind == "sine":
        return lambda x: np.sin(2.0 * np.pi * x / domain_length)
    if kind == "zero":
        return lambda x: np.zeros_like(x)
    raise FormatError(f"unknown ic kind {kind!r}")


# ---------------------------------------------------------------------------
# gen-data
# ---------------------------------------------------------------------------

GEN_DEFAULTS = {
    "preset": None,
    "n_traj": 1,
    "n_t": 100,
    "n_x": 40,
    "seed": 0,
    "t_end": 4.0,
    "length": 16.0,
    "cfl": 0.4,
    "fine_factor": 4,
    "max_steps": 10_000_000,
}


def cmd_gen_data(args) -> int:
    cfg = _apply_config_file(args, GEN_DEFAULTS)
    if cfg["preset"] not in PRESET_NAMES:
        print(f"error: --preset must be one of {PRESET_NAMES}", file=sys.stderr)
        return EXIT_USAGE
    grid = Grid(n_x=cfg["n_x"], n_t=cfg["n_t"], domain_length=cfg["length"], t_end=cfg["t_end"])
    solve_cfg = _solve_config(cfg, default_fine=4)
    dataset = generate_dataset(
        cfg["preset"], cfg["n_traj"], grid, cfg["seed"], solve_cfg, threads=_threads(args)
    )
    mpath, ppath = save_dataset(
        args.out, dataset, solve_cfg, extra_meta={"ic": "forcing", "effective_config": cfg}
    )
    print(f"wrote {mpath} + {ppath}: {len(dataset)} trajectories, {ppath.stat().st_size} payload bytes")
    return 0


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

SOLVE_DEFAULTS = {
    "preset": None,
    "alpha": None,
    "beta": None,
    "gamma": None,
    "ic": None,
    "n_t": 100,
    "n_x": 40,
    "seed": 0,
    "t_end": 4.0,
    "length": 16.0,
    "cfl": 0.4,
    "fine_factor": 4,
    "max_steps": 10_000_000,
}

HEAT_BETA = 0.5


def cmd_solve(args) -> int:
    cfg = _apply_config_file(args, SOLVE_DEFAULTS)
    preset = cfg["preset"]
    if preset is not None and preset not in PRESET_NAMES + ("heat",):
        print(f"error: --preset must be one of {PRESET_NAMES + ('heat',)}", file=sys.stderr)
        return EXIT_USAGE
    if preset in PRESET_NAMES:
        params, forcing = make_preset(preset, cfg["seed"])
        ic_kind = cfg["ic"] or "forcing"
        label = preset
    elif preset == "heat":
        params = PdeParams(alpha=0.0, beta=HEAT_BETA, gamma=0.0, domain_length=cfg["length"])
        forcing = ZERO_FORCING
        ic_kind = cfg["ic"] or "sine"
        label = "heat"
    else:
        params = PdeParams(
            alpha=cfg["alpha"] or 0.0,
            beta=cfg["beta"] or 0.0,
            gamma=cfg["gamma"] or 0.0,
            domain_length=cfg["length"],
        )
        forcing = ZERO_FORCING
        ic_kind = cfg["ic"] or "zero"
        label = "custom"
    # explicit coefficient flags override the preset's values
    overrides = {k: cfg[k] for k in ("alpha", "beta", "gamma") if cfg[k] is not None}
    if overrides and preset is not None:
        params = PdeParams(
            alpha=overrides.get("alpha", params.alpha),
            beta=overrides.get("beta", params.beta),
            gamma=overrides.get("gamma", params.gamma),
            domain_length=params.domain_length,
            boundary=params.boundary,
        )
    if ic_kind not in IC_KINDS:
        print(f"error: --ic must be one of {IC_KINDS}", file=sys.stderr)
        return EXIT_USAGE

    grid = Grid(n_x=cfg["n_x"], n_t=cfg["n_t"], domain_length=cfg["length"], t_end=cfg["t_end"])
    solve_cfg = _solve_config(cfg, default_fine=4)
    traj = solve_trajectory(
        params, forcing, grid, solve_cfg, ic=_ic_callable(ic_kind, cfg["length"])
    )
    dataset = TrajectorySet(preset=label, seed=cfg["seed"], trajectories=(traj,))
    mpath, ppath = save_dataset(
        args.out, dataset, solve_cfg, extra_meta={"ic": ic_kind, "effective_config": cfg}
    )
    print(f"wrote {mpath} + {ppath}: 1 trajectory, {ppath.stat().st_size} payload bytes")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

TRAIN_DEFAULTS = {
    "epochs": 50,
    "batch_size": 16,
    "lr": 1e-3,
    "seed": 0,
    "pushforward": True,
    "max_grad_norm": 1.0,
    "bundle_size": 5,
    "layers": 6,
    "hidden": 64,
    "radius": 3,
}


def cmd_train(args) -> int:
    cfg = _apply_config_file(args, TRAIN_DEFAULTS)
    if args.no_pushforward:
        cfg["pushforward"] = False
    dataset, _meta = load_dataset(args.dataset)
    model_cfg = ModelConfig(
        bundle_size=cfg["bundle_size"],
        num_layers=cfg["layers"],
        hidden_dim=cfg["hidden"],
        neighborhood_radius=cfg["radius"],
    )
    try:
        valid_start_range(dataset.grid.n_t, model_cfg.bundle_size, cfg["pushforward"])
    except InsufficientHorizon:
        print(
            f"error: bundle size {model_cfg.bundle_size} incompatible with "
            f"dataset n_t={dataset.grid.n_t}",
            file=sys.stderr,
        )
        return EXIT_USAGE
    train_cfg = TrainConfig(
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        learning_rate=cfg["lr"],
        seed=cfg["seed"],
        use_pushforward=cfg["pushforward"],
        max_grad_norm=cfg["max_grad_norm"],
    )
    model = init_model(model_cfg, cfg["seed"])
    model, log = train(model, dataset, train_cfg)
    provenance = {
        "dataset": str(args.dataset),
        "dataset_sha256": dataset_hash(args.dataset),
        "seed": cfg["seed"],
        "epochs": cfg["epochs"],
        "effective_config": cfg,
    }
    mpath, ppath = save_checkpoint(args.out, model, provenance)
    log_path = save_train_log(str(args.out) + ".log.jsonl", log)
    print(f"wrote {mpath} + {ppath} and {log_path}: {len(log)} epochs")
    return 0


# ---------------------------------------------------------------------------
# eval / compare
# ---------------------------------------------------------------------------

EVAL_DEFAULTS = {
    "preset": "e1",
    "n_traj": 1,
    "threshold": 0.01,
    "t_end": 4.0,
    "length": 16.0,
    "cfl": 0.4,
    "fine_factor": 4,
    "max_steps": 10_000_000,
    "timing_repeats": 3,
}


def _parse_solvers(entries: list[str]) -> tuple[tuple[str, ...], dict]:
    """Each entry is 'weno5', 'truth', or 'name=checkpoint_stem'."""
    solvers = []
    models = {}
    for entry in entries:
        if "=" in entry:
            name, stem = entry.split("=", 1)
            if not meta_path(stem).exists() or not payload_path(stem).exists():
                raise MissingCheckpoint(f"checkpoint {stem!r} for solver {name!r} not found")
            model, _doc = load_checkpoint(stem)
            models[name] = model
            solvers.append(name)
        elif entry in ("weno5", "truth"):
            solvers.append(entry)
        else:
            raise MissingCheckpoint(
                f"solver {entry!r} needs a checkpoint: use {entry}=<stem>"
            )
    return tuple(solvers), models


def _parse_resolutions(entries: list[str]) -> tuple[tuple[int, int], ...]:
    out = []
    for entry in entries:
        try:
            n_t, n_x = entry.lower().split("x")
            out.append((int(n_t), int(n_x)))
        except ValueError as err:
            raise FormatError(f"bad --resolution {entry!r}, expected NTxNX") from err
    return tuple(out)


def _write_report(report: EvalReport, out) -> tuple[Path, Path]:
    csv_path = Path(str(out) + ".csv")
    json_path = Path(str(out) + ".report.json")
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    csv_path.write_text(report_to_csv(report))
    json_path.write_text(report_to_json(report))
    return csv_path, json_path


def _run_eval(args) -> EvalReport:
    cfg = _apply_config_file(args, EVAL_DEFAULTS)
    solvers, models = _parse_solvers(args.solver)
    spec_kwargs = dict(
        solvers=solvers,
        threshold=cfg["threshold"],
        n_trajectories=cfg["n_traj"],
        domain_length=cfg["length"],
        t_end=cfg["t_end"],
        timing_repeats=cfg["timing_repeats"],
        reference_config=SolveConfig(cfl_number=cfg["cfl"], fine_factor=cfg["fine_factor"], max_steps=cfg["max_steps"]),
        solver_config=SolveConfig(cfl_number=cfg["cfl"], fine_factor=1, max_steps=cfg["max_steps"]),
    )
    if args.truth:
        truth, meta = load_dataset(args.truth)
        spec = ExperimentSpec(
            preset=truth.preset,
            resolutions=((truth.grid.n_t, truth.grid.n_x),),
            seeds=(truth.seed,),
            **spec_kwargs,
        )
        ic = _ic_callable(meta.get("ic", "forcing"), truth.grid.domain_length)
        cells = evaluate_cells(truth, spec, truth.seed, models, ic=ic)
        return EvalReport(spec=spec, cells=tuple(cells))
    seeds = tuple(int(s) for s in args.seeds.split(",")) if args.seeds else (0,)
    spec = ExperimentSpec(
        preset=cfg["preset"],
        resolutions=_parse_resolutions(args.resolution or ["100x40"]),
        seeds=seeds,
        **spec_kwargs,
    )
    return run_experiment(spec, models)


def cmd_eval(args) -> int:
    report = _run_eval(args)
    csv_path, json_path = _write_report(report, args.out)
    print(f"wrote {csv_path} + {json_path}: {len(report.cells)} cells")
    return 0


def cmd_compare(args) -> int:
    if len(args.solver) < 2:
        print("error: compare needs at least two --solver entries", file=sys.stderr)
        return EXIT_USAGE
    report = _run_eval(args)
    header = f"{'solver':>12} {'n_t':>5} {'n_x':>5} {'seed':>5} {'acc_error':>12} {'survival':>9} {'runtime_ms':>11}"
    print(header)
    print("-" * len(header))
    for c in report.cells:
        print(
            f"{c.solver:>12} {c.n_t:>5} {c.n_x:>5} {c.seed:>5} "
            f"{c.acc_error:>12.5g} {c.survival:>9.4g} {c.runtime_ms:>11.3g}"
        )
    if args.out:
        csv_path, json_path = _write_report(report, args.out)
        print(f"wrote {csv_path} + {json_path}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mppde",
        description="1D conservation-law lab: classical WENO5 solver, "
        "message-passing neural surrogate, shared metrics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file with default overrides")
        p.add_argument("--threads", type=int, help="worker cap (or MPPDE_THREADS)")

    p = sub.add_parser("gen-data", help="generate a ground-truth dataset")
    p.add_argument("--preset", help="e1 | e2 | e3")
    p.add_argument("--n-traj", dest="n_traj", type=int)
    p.add_argument("--n-t", dest="n_t", type=int)
    p.add_argument("--n-x", dest="n_x", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--length", type=float)
    p.add_argument("--cfl", type=float)
    p.add_argument("--fine-factor", dest="fine_factor", type=int)
    p.add_argument("--max-steps", dest="max_steps", type=int)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("solve", help="solve a single classical trajectory")
    p.add_argument("--preset", help="e1 | e2 | e3 | heat")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--ic", help="forcing | sine | zero")
    p.add_argument("--n-t", dest="n_t", type=int)
    p.add_argument("--n-x", dest="n_x", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--length", type=float)
    p.add_argument("--cfl", type=float)
    p.add_argument("--fine-factor", dest="fine_factor", type=int)
    p.add_argument("--max-steps", dest="max_steps", type=int)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("train", help="train the neural surrogate on a dataset")
    p.add_argument("--dataset", required=True, help="dataset stem (no extension)")
    p.add_argument("--out", required=True, help="checkpoint stem")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-pushforward", action="store_true")
    p.add_argument("--max-grad-norm", dest="max_grad_norm", type=float)
    p.add_argument("--bundle-size", dest="bundle_size", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--radius", type=int)
    common(p)
    p.set_defaults(func=cmd_train)

    for name, fn in (("eval", cmd_eval), ("compare", cmd_compare)):
        p = sub.add_parser(name, help=f"{name} solvers against reference truth")
        p.add_argument(
            "--solver",
            action="append",
            required=True,
            help="weno5 | truth | <name>=<checkpoint stem> (repeatable)",
        )
        p.add_argument("--truth", help="dataset stem to use as ground truth")
        p.add_argument("--preset")
        p.add_argument("--resolution", action="append", help="NTxNX (repeatable)")
        p.add_argument("--seeds", help="comma-separated seeds")
        p.add_argument("--n-traj", dest="n_traj", type=int)
        p.add_argument("--threshold", type=float)
        p.add_argument("--t-end", dest="t_end", type=float)
        p.add_argument("--length", type=float)
        p.add_argument("--cfl", type=float)
        p.add_argument("--fine-factor", dest="fine_factor", type=int)
        p.add_argument("--max-steps", dest="max_steps", type=int)
        p.add_argument("--timing-repeats", dest="timing_repeats", type=int)
        p.add_argument("--out", required=(name == "eval"))
        common(p)
        p.set_defaults(func=fn)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MissingCheckpoint as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except (SolutionBlowup, StepLimitExceeded) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_SOLVER
    except (FormatError, InsufficientHorizon, MppdeError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
