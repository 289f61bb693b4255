"""Bit-exact persistence: datasets, checkpoints, training logs.

Every artifact is a pair of adjacent files sharing a stem: a human-readable
JSON metadata document and a raw little-endian float64 payload (row-major).
Format versions are checked on load; a mismatch raises, never reinterprets.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .classical import SolveConfig
from .exceptions import FormatError
from .model import ModelConfig, MpPdeModel
from .pde import (
    Boundary,
    ForcingComponent,
    ForcingTerm,
    Grid,
    PdeParams,
    Trajectory,
    TrajectorySet,
)
from .training import EpochStats, TrainLog

DATASET_FORMAT_VERSION = 1
CHECKPOINT_FORMAT_VERSION = 1

PAYLOAD_DTYPE = "<f8"  # little-endian float64, regardless of host


def meta_path(stem) -> Path:
    return Path(str(stem) + ".json")


def payload_path(stem) -> Path:
    return Path(str(stem) + ".bin")


def _write_json(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2) + "\n")


def _read_json(path: Path) -> dict:
    if not path.exists():
        raise FormatError(f"missing metadata file {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise FormatError(f"unreadable metadata in {path}: {err}") from err


def _check_version(doc: dict, kind: str, expected: int, path: Path) -> None:
    if doc.get("kind") != kind:
        raise FormatError(f"{path} holds {doc.get('kind')!r}, expected {kind!r}")
    if doc.get("format_version") != expected:
        raise FormatError(
            f"{path} has format_version {doc.get('format_version')!r}, "
            f"this build reads version {expected}"
        )


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------

def _forcing_doc(forcing: ForcingTerm) -> list[dict]:
    return [
        {
            "amplitude": c.amplitude,
            "omega": c.omega,
            "wavenumber": c.wavenumber,
            "phase": c.phase,
        }
        for c in forcing.components
    ]


def _forcing_from_doc(doc: list[dict]) -> ForcingTerm:
    return ForcingTerm(
        tuple(
            ForcingComponent(c["amplitude"], c["omega"], int(c["wavenumber"]), c["phase"])
            for c in doc
        )
    )


def save_dataset(
    stem,
    dataset: TrajectorySet,
    solve_config: SolveConfig | None = None,
    extra_meta: dict | None = None,
) -> tuple[Path, Path]:
    """Write <stem>.json + <stem>.bin; returns both paths."""
    grid = dataset.grid
    payload = np.ascontiguousarray(dataset.payload(), dtype=PAYLOAD_DTYPE)
    doc = {
        "format_version": DATASET_FORMAT_VERSION,
        "kind": "dataset",
        "preset": dataset.preset,
        "seed": dataset.seed,
        "n_trajectories": len(dataset),
        "grid": {
            "n_x": grid.n_x,
            "n_t": grid.n_t,
            "domain_length": grid.domain_length,
            "t_end": grid.t_end,
        },
        "trajectories": [
            {
                "alpha": t.params.alpha,
                "beta": t.params.beta,
                "gamma": t.params.gamma,
                "boundary": {"kind": t.params.boundary.kind, "value": t.params.boundary.value},
                "forcing": _forcing_doc(t.forcing),
            }
            for t in dataset
        ],
        "payload": {
            "dtype": PAYLOAD_DTYPE,
            "shape": list(payload.shape),
            "bytes": payload.nbytes,
        },
    }
    if solve_config is not None:
        doc["solver"] = {
            "cfl_number": solve_config.cfl_number,
            "fine_factor": solve_config.fine_factor,
            "max_steps": solve_config.max_steps,
            "dt_max": solve_config.dt_max,
        }
    if extra_meta:
        doc.update(extra_meta)
    mpath, ppath = meta_path(stem), payload_path(stem)
    _write_json(mpath, doc)
    ppath.parent.mkdir(parents=True, exist_ok=True)
    ppath.write_bytes(payload.tobytes())
    return mpath, ppath


def load_dataset(stem) -> tuple[TrajectorySet, dict]:
    """Read a dataset pair back; returns (trajectories, metadata)."""
    mpath, ppath = meta_path(stem), payload_path(stem)
    doc = _read_json(mpath)
    _check_version(doc, "dataset", DATASET_FORMAT_VERSION, mpath)
    shape = tuple(doc["payload"]["shape"])
    raw = ppath.read_bytes()
    expected = int(np.prod(shape)) * 8
    if len(raw) != expected or doc["payload"]["bytes"] != expected:
        raise FormatError(
            f"{ppath} holds {len(raw)} bytes, metadata promises {expected}"
        )
    payload = np.frombuffer(raw, dtype=PAYLOAD_DTYPE).reshape(shape).astype(np.float64)
    g = doc["grid"]
    grid = Grid(n_x=g["n_x"], n_t=g["n_t"], domain_length=g["domain_length"], t_end=g["t_end"])
    trajectories = []
    for i, tdoc in enumerate(doc["trajectories"]):
        params = PdeParams(
            alpha=tdoc["alpha"],
            beta=tdoc["beta"],
            gamma=tdoc["gamma"],
            domain_length=grid.domain_length,
            boundary=Boundary(tdoc["boundary"]["kind"], tdoc["boundary"]["value"]),
        )
        trajectories.append(Trajectory(grid, params, _forcing_from_doc(tdoc["forcing"]), payload[i]))
    dataset = TrajectorySet(
        preset=doc["preset"], seed=doc["seed"], trajectories=tuple(trajectories)
    )
    return dataset, doc


def dataset_hash(stem) -> str:
    """SHA-256 over metadata and payload bytes (training provenance)."""
    h = hashlib.sha256()
    h.update(meta_path(stem).read_bytes())
    h.update(payload_path(stem).read_bytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(stem, model: MpPdeModel, provenance: dict | None = None) -> tuple[Path, Path]:
    """Write model config + named parameters; payload order follows the names."""
    names = list(model.params)
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "kind": "checkpoint",
        "model_config": {
            "bundle_size": model.config.bundle_size,
            "num_layers": model.config.num_layers,
            "hidden_dim": model.config.hidden_dim,
            "neighborhood_radius": model.config.neighborhood_radius,
        },
        "params": [
            {"name": name, "shape": list(model.params[name].shape)} for name in names
        ],
        "provenance": provenance or {},
    }
    blobs = [
        np.ascontiguousarray(model.params[name].data, dtype=PAYLOAD_DTYPE).tobytes()
        for name in names
    ]
    mpath, ppath = meta_path(stem), payload_path(stem)
    _write_json(mpath, doc)
    ppath.parent.mkdir(parents=True, exist_ok=True)
    ppath.write_bytes(b"".join(blobs))
    return mpath, ppath


def load_checkpoint(stem) -> tuple[MpPdeModel, dict]:
    mpath, ppath = meta_path(stem), payload_path(stem)
    doc = _read_json(mpath)
    _check_version(doc, "checkpoint", CHECKPOINT_FORMAT_VERSION, mpath)
    cfg = ModelConfig(**doc["model_config"])
    raw = ppath.read_bytes()
    params: dict[str, Tensor] = {}
    offset = 0
    for entry in doc["params"]:
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape)) * 8 if shape else 8
        chunk = raw[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise FormatError(f"{ppath} truncated at parameter {entry['name']!r}")
        params[entry["name"]] = Tensor(
            np.frombuffer(chunk, dtype=PAYLOAD_DTYPE).reshape(shape).astype(np.float64),
            requires_grad=True,
        )
        offset += nbytes
    if offset != len(raw):
        raise FormatError(f"{ppath} has {len(raw) - offset} trailing bytes")
    return MpPdeModel(cfg, params), doc


# ---------------------------------------------------------------------------
# training logs
# ---------------------------------------------------------------------------

def save_train_log(path, log: TrainLog) -> Path:
    """Line-delimited JSON, one record per epoch."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        json.dumps(
            {
                "epoch": e.epoch,
                "one_step": e.one_step,
                "pushforward": e.pushforward,
                "total": e.total,
                "wall_ms": e.wall_ms,
            }
        )
        for e in log.epochs
    ]
    path.write_text("\n".join(lines) + ("\n" if lines else ""))
    return path


def load_train_log(path) -> TrainLog:
    log = TrainLog()
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        log.epochs.append(
            EpochStats(
                epoch=rec["epoch"],
                one_step=rec["one_step"],
                pushforward=rec["pushforward"],
                total=rec["total"],
                wall_ms=rec["wall_ms"],
            )
        )
    return log
