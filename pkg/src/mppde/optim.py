"""Adam with bias correction, plus global-norm gradient clipping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .exceptions import ShapeMismatch


@dataclass
class AdamState:
    """Per-parameter moment estimates; created lazily on the first step."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    first_moment: list[np.ndarray] = field(default_factory=list)
    second_moment: list[np.ndarray] = field(default_factory=list)


def adam_step(
    params: list[Tensor],
    grads: dict[int, Tensor],
    state: AdamState,
) -> tuple[list[Tensor], AdamState]:
    """One Adam update, in place on the parameter tensors.

    `grads` is the map returned by backward(); parameters without an entry
    see a zero gradient (their moments decay toward zero).
    """
    if not state.first_moment:
        state.first_moment = [np.zeros(p.shape) for p in params]
        state.second_moment = [np.zeros(p.shape) for p in params]
    if len(state.first_moment) != len(params):
        raise ShapeMismatch("AdamState was created for a different parameter set")
    state.step_count += 1
    t = state.step_count
    for i, p in enumerate(params):
        g = grads.get(p.node_id)
        g_data = np.zeros(p.shape) if g is None else g.data
        if g_data.shape != p.data.shape:
            raise ShapeMismatch(f"gradient {g_data.shape} vs parameter {p.data.shape}")
        m = state.first_moment[i]
        v = state.second_moment[i]
        m *= state.beta1
        m += (1.0 - state.beta1) * g_data
        v *= state.beta2
        v += (1.0 - state.beta2) * g_data**2
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        p.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


def clip_grad_norm(grads: dict[int, Tensor], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm.

    Returns the norm before clipping.
    """
    total = float(np.sqrt(sum(float((g.data**2).sum()) for g in grads.values())))
    if max_norm > 0.0 and total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g.data *= scale
    return total
