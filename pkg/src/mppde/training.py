"""Loss construction (one-step + pushforward stability) and the train loop.

The pushforward trick runs the model twice per sample: the first pass is
detached and its prediction becomes the (noisy) input window of the second
pass, so gradients only see the most recent step while the loss
distribution matches rollout conditions.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .exceptions import InsufficientHorizon, SolutionBlowup
from .model import EdgeList, MpPdeModel, NodeInputs, build_graph, forward
from .optim import AdamState, adam_step, clip_grad_norm
from .pde import Trajectory, TrajectorySet


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 16
    learning_rate: float = 1e-3
    seed: int = 0
    use_pushforward: bool = True
    max_grad_norm: float = 1.0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.learning_rate < 0.0 or self.max_grad_norm <= 0.0:
            raise ValueError("learning_rate must be >= 0, max_grad_norm > 0")


@dataclass(frozen=True)
class TrainSample:
    """A trajectory index and the step k whose window ends the model input."""

    trajectory: int
    start: int


def valid_start_range(n_t: int, bundle_size: int, pushforward: bool) -> range:
    """Step indices k whose input window and target bundle(s) fit inside the
    trajectory: window rows k-K+1..k, targets through k+K (or k+2K)."""
    k = bundle_size
    horizon = 2 * k if pushforward else k
    last = n_t - 1 - horizon
    if last < k - 1:
        need = horizon + k
        raise InsufficientHorizon(
            f"trajectory length {n_t} too short for bundle_size {k} "
            f"(needs at least {need} steps)"
        )
    return range(k - 1, last + 1)


def window_inputs(traj: Trajectory, k: int, bundle_size: int, window=None) -> NodeInputs:
    """Model inputs whose window ends at step k (rows k-K+1..k).

    `window` overrides the ground-truth rows (used by the pushforward pass).
    """
    t = traj.grid.t_points
    if window is None:
        window = traj.u[k - bundle_size + 1 : k + 1]
    return NodeInputs(
        window=window,
        x_centers=traj.grid.x_centers,
        t_value=float(t[k]),
        t_end=traj.grid.t_end,
        t_offsets=t[k + 1 : k + bundle_size + 1] - t[k],
        params=traj.params,
    )


def target_bundle(traj: Trajectory, k: int, bundle_size: int) -> np.ndarray:
    """Ground-truth rows k+1..k+K."""
    return traj.u[k + 1 : k + bundle_size + 1]


def _mean_loss(losses: list[Tensor]) -> Tensor:
    total = losses[0]
    for term in losses[1:]:
        total = total + term
    return total * (1.0 / len(losses))


def one_step_loss(
    model: MpPdeModel,
    dataset: TrajectorySet,
    batch: list[TrainSample],
    graph: EdgeList | None = None,
) -> Tensor:
    """Mean MSE between predicted and true bundles over the batch."""
    if not batch:
        raise ValueError("empty batch")
    k_bundle = model.config.bundle_size
    losses = []
    for sample in batch:
        traj = dataset[sample.trajectory]
        pred = forward(model, window_inputs(traj, sample.start, k_bundle), graph)
        losses.append(ad.mse(pred, Tensor(target_bundle(traj, sample.start, k_bundle))))
    return _mean_loss(losses)


def pushforward_loss(
    model: MpPdeModel,
    dataset: TrajectorySet,
    batch: list[TrainSample],
    graph: EdgeList | None = None,
) -> Tensor:
    """One-step loss at k+K with the model's own detached prediction as input."""
    if not batch:
        raise ValueError("empty batch")
    k_bundle = model.config.bundle_size
    losses = []
    for sample in batch:
        traj = dataset[sample.trajectory]
        if sample.start + 2 * k_bundle > traj.grid.n_t - 1:
            raise InsufficientHorizon(
                f"start {sample.start} leaves no room for two bundles of {k_bundle}"
            )
        with ad.no_grad():
            noisy = forward(model, window_inputs(traj, sample.start, k_bundle), graph).data
        inputs2 = window_inputs(traj, sample.start + k_bundle, k_bundle, window=noisy)
        pred2 = forward(model, inputs2, graph)
        target2 = target_bundle(traj, sample.start + k_bundle, k_bundle)
        losses.append(ad.mse(pred2, Tensor(target2)))
    return _mean_loss(losses)


def total_loss(
    model: MpPdeModel,
    dataset: TrajectorySet,
    batch: list[TrainSample],
    graph: EdgeList | None = None,
    use_pushforward: bool = True,
) -> Tensor:
    """one_step + pushforward; exactly one_step when the trick is disabled."""
    loss = one_step_loss(model, dataset, batch, graph)
    if use_pushforward:
        loss = loss + pushforward_loss(model, dataset, batch, graph)
    return loss


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    one_step: float
    pushforward: float
    total: float
    wall_ms: float


@dataclass
class TrainLog:
    epochs: list[EpochStats] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.epochs)


def _draw_samples(
    rng: np.random.Generator, dataset: TrajectorySet, bundle_size: int, pushforward: bool
) -> list[TrainSample]:
    """One uniformly drawn valid start per trajectory, shuffled."""
    starts = valid_start_range(dataset.grid.n_t, bundle_size, pushforward)
    samples = [
        TrainSample(i, int(rng.integers(starts.start, starts.stop)))
        for i in range(len(dataset))
    ]
    order = rng.permutation(len(samples))
    return [samples[i] for i in order]


def train(
    model: MpPdeModel,
    dataset: TrajectorySet,
    config: TrainConfig,
) -> tuple[MpPdeModel, TrainLog]:
    """Seeded SGD loop: shuffle, batch, total loss, clip, Adam.

    Deterministic given (model parameters, dataset, config). Raises
    SolutionBlowup (naming epoch and batch) if the loss goes non-finite.
    """
    k_bundle = model.config.bundle_size
    valid_start_range(dataset.grid.n_t, k_bundle, config.use_pushforward)
    graph = build_graph(
        dataset.grid.n_x,
        model.config.neighborhood_radius,
        dataset[0].params.boundary,
    )
    rng = np.random.default_rng(config.seed)
    opt = AdamState(lr=config.learning_rate)
    log = TrainLog()
    params = model.parameters()
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        samples = _draw_samples(rng, dataset, k_bundle, config.use_pushforward)
        sums = {"one_step": 0.0, "pushforward": 0.0, "total": 0.0}
        n_batches = 0
        for lo in range(0, len(samples), config.batch_size):
            batch = samples[lo : lo + config.batch_size]
            with Tape():
                loss_one = one_step_loss(model, dataset, batch, graph)
                loss = loss_one
                push_value = 0.0
                if config.use_pushforward:
                    loss_push = pushforward_loss(model, dataset, batch, graph)
                    push_value = float(loss_push.data)
                    loss = loss_one + loss_push
            if not np.isfinite(loss.data):
                raise SolutionBlowup(
                    f"non-finite loss at epoch {epoch}, batch {n_batches}"
                )
            grads = ad.backward(loss)
            clip_grad_norm(grads, config.max_grad_norm)
            adam_step(params, grads, opt)
            sums["one_step"] += float(loss_one.data)
            sums["pushforward"] += push_value
            sums["total"] += float(loss.data)
            n_batches += 1
        log.epochs.append(
            EpochStats(
                epoch=epoch,
                one_step=sums["one_step"] / n_batches,
                pushforward=sums["pushforward"] / n_batches,
                total=sums["total"] / n_batches,
                wall_ms=(time.perf_counter() - t0) * 1e3,
            )
        )
    return model, log
