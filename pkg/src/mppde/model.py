"""Message-passing PDE surrogate: MLP encoder, M processor layers, CNN decoder.

Each call consumes a window of K solution snapshots and emits the next K
(temporal bundling). The processor passes messages along a ring graph that
connects nodes within a configurable radius; equation coefficients are
injected at the encoder, the edge update, and the node update.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .exceptions import GridTooSmall, ShapeMismatch, SolutionBlowup
from .pde import BOUNDARY_KINDS, Boundary, Grid, PdeParams

# (alpha, beta, gamma) + one-hot boundary kind
THETA_DIM = 3 + len(BOUNDARY_KINDS)

DECODER_CHANNELS = 8
DECODER_KERNEL = 5


def theta_features(params: PdeParams) -> np.ndarray:
    """Equation coefficients plus a boundary-type one-hot."""
    onehot = [1.0 if params.boundary.kind == k else 0.0 for k in BOUNDARY_KINDS]
    return np.array([params.alpha, params.beta, params.gamma, *onehot])


@dataclass(frozen=True)
class ModelConfig:
    bundle_size: int = 5          # K: steps consumed and emitted per call
    num_layers: int = 6           # M: message-passing layers
    hidden_dim: int = 64
    neighborhood_radius: int = 3  # connect |i - j| <= radius (wrapping)

    def __post_init__(self):
        for name in ("bundle_size", "num_layers", "hidden_dim", "neighborhood_radius"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass(frozen=True)
class EdgeList:
    """Directed edges j -> i, ordered by (i, signed offset)."""

    src: np.ndarray      # j, message sender
    dst: np.ndarray      # i, message receiver
    offsets: np.ndarray  # o with j = i + o (mod n for periodic)
    n_nodes: int

    @property
    def n_edges(self) -> int:
        return self.src.size


def build_graph(n_x: int, radius: int, boundary: Boundary = Boundary()) -> EdgeList:
    """Ring (periodic) or path graph with all neighbors within `radius`."""
    if n_x <= 2 * radius:
        raise GridTooSmall(f"need n_x > 2*radius, got n_x={n_x}, radius={radius}")
    src, dst, offs = [], [], []
    for i in range(n_x):
        for o in range(-radius, radius + 1):
            if o == 0:
                continue
            j = i + o
            if boundary.is_periodic:
                j %= n_x
            elif not 0 <= j < n_x:
                continue
            src.append(j)
            dst.append(i)
            offs.append(o)
    return EdgeList(
        np.array(src, dtype=np.intp),
        np.array(dst, dtype=np.intp),
        np.array(offs, dtype=np.intp),
        n_x,
    )


@dataclass(frozen=True)
class NodeInputs:
    """One model call's worth of per-node inputs.

    window holds the K most recent snapshots, shape [K, n_x]; it may be a
    Tensor so gradients can flow through it (unrolled training). t_offsets
    are the positive time increments of the K predicted steps.
    """

    window: object                # ndarray or Tensor, [K, n_x]
    x_centers: np.ndarray         # [n_x]
    t_value: float                # time of the last window row
    t_end: float
    t_offsets: np.ndarray         # [K], strictly increasing, > 0
    params: PdeParams

    def __post_init__(self):
        w = self.window.data if isinstance(self.window, Tensor) else np.asarray(self.window)
        if w.ndim != 2 or w.shape[1] != self.x_centers.size:
            raise ShapeMismatch(f"window {w.shape} vs {self.x_centers.size} nodes")
        if not np.all(np.isfinite(w)):
            raise SolutionBlowup("window contains non-finite values")
        if self.t_offsets.size != w.shape[0]:
            raise ShapeMismatch("need one t_offset per window row")
        if np.any(self.t_offsets <= 0) or np.any(np.diff(self.t_offsets) <= 0):
            raise ValueError("t_offsets must be positive and strictly increasing")

    @property
    def bundle_size(self) -> int:
        w = self.window.data if isinstance(self.window, Tensor) else self.window
        return w.shape[0]

    @property
    def n_x(self) -> int:
        return self.x_centers.size


@dataclass
class MpPdeModel:
    """Named parameter bundle; the network itself lives in the functions below."""

    config: ModelConfig
    params: dict[str, Tensor] = field(default_factory=dict)

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def zero_decoder(self) -> None:
        """Zero all decoder weights, making every prediction repeat u^k."""
        for name, p in self.params.items():
            if name.startswith("decoder."):
                p.data[...] = 0.0


def _init_linear(rng, n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray]:
    scale = np.sqrt(2.0 / (n_in + n_out))
    return rng.normal(0.0, scale, size=(n_in, n_out)), np.zeros(n_out)


def init_model(config: ModelConfig, seed: int) -> MpPdeModel:
    """Deterministic parameter initialization for a given seed."""
    rng = np.random.default_rng(seed)
    k, h = config.bundle_size, config.hidden_dim
    params: dict[str, Tensor] = {}

    def linear(name: str, n_in: int, n_out: int) -> None:
        w, b = _init_linear(rng, n_in, n_out)
        params[f"{name}.w"] = Tensor(w, requires_grad=True)
        params[f"{name}.b"] = Tensor(b, requires_grad=True)

    linear("encoder.l1", k + 2 + THETA_DIM, h)
    linear("encoder.l2", h, h)
    for m in range(config.num_layers):
        linear(f"layer{m}.phi.l1", 2 * h + k + 1 + THETA_DIM, h)
        linear(f"layer{m}.phi.l2", h, h)
        linear(f"layer{m}.psi.l1", 2 * h + THETA_DIM, h)
        linear(f"layer{m}.psi.l2", h, h)

    c, ksz = DECODER_CHANNELS, DECODER_KERNEL
    scale1 = np.sqrt(2.0 / (ksz + c * ksz))
    params["decoder.conv1.w"] = Tensor(
        rng.normal(0.0, scale1, size=(c, 1, ksz)), requires_grad=True
    )
    params["decoder.conv1.b"] = Tensor(np.zeros(c), requires_grad=True)
    scale2 = np.sqrt(2.0 / (c * ksz + ksz))
    params["decoder.conv2.w"] = Tensor(
        rng.normal(0.0, scale2, size=(1, c, ksz)), requires_grad=True
    )
    params["decoder.conv2.b"] = Tensor(np.zeros(1), requires_grad=True)
    linear("decoder.lin", h, k)
    return MpPdeModel(config, params)


def _mlp2(x: Tensor, model: MpPdeModel, prefix: str) -> Tensor:
    p = model.params
    hidden = ad.swish(ad.matmul(x, p[f"{prefix}.l1.w"]) + p[f"{prefix}.l1.b"])
    return ad.matmul(hidden, p[f"{prefix}.l2.w"]) + p[f"{prefix}.l2.b"]


def encode(model: MpPdeModel, inputs: NodeInputs) -> Tensor:
    """Per-node embedding of [u window, x, t, theta] through the shared MLP."""
    window = ad.as_tensor(inputs.window)
    if inputs.bundle_size != model.config.bundle_size:
        raise ShapeMismatch(
            f"window has {inputs.bundle_size} rows, model expects "
            f"{model.config.bundle_size}"
        )
    n_x = inputs.n_x
    theta = theta_features(inputs.params)
    const = np.empty((n_x, 2 + THETA_DIM))
    const[:, 0] = inputs.x_centers
    const[:, 1] = inputs.t_value / inputs.t_end
    const[:, 2:] = theta
    enc_in = ad.concat([ad.transpose(window), Tensor(const)], axis=1)
    return _mlp2(enc_in, model, "encoder")


def message(model: MpPdeModel, layer: int, f_i, f_j, u_diff, x_diff, theta) -> Tensor:
    """Edge update phi([f_i, f_j, u_i - u_j, x_i - x_j, theta]).

    Positions enter only through their difference, so shifting the whole
    grid leaves every message unchanged.
    """
    x_diff = np.asarray(x_diff, dtype=np.float64).reshape(-1, 1)
    n_e = x_diff.shape[0]
    const = np.empty((n_e, 1 + THETA_DIM))
    const[:, :1] = x_diff
    const[:, 1:] = np.asarray(theta)
    edge_in = ad.concat(
        [ad.as_tensor(f_i), ad.as_tensor(f_j), ad.as_tensor(u_diff), Tensor(const)],
        axis=1,
    )
    return _mlp2(edge_in, model, f"layer{layer}.phi")


def node_update(model: MpPdeModel, layer: int, f, aggregated, theta) -> Tensor:
    """Node update psi([f_i, sum of incoming messages, theta])."""
    f = ad.as_tensor(f)
    n_x = f.shape[0]
    theta_rows = np.broadcast_to(np.asarray(theta), (n_x, THETA_DIM)).copy()
    node_in = ad.concat([f, ad.as_tensor(aggregated), Tensor(theta_rows)], axis=1)
    return _mlp2(node_in, model, f"layer{layer}.psi")


def decode(model: MpPdeModel, f: Tensor, u_k, t_offsets: np.ndarray) -> Tensor:
    """Map final embeddings to a bundle: u^{k+l} = u^k + (t_{k+l} - t_k) d^l."""
    t_offsets = np.asarray(t_offsets, dtype=np.float64)
    if np.any(t_offsets <= 0) or np.any(np.diff(t_offsets) <= 0):
        raise ValueError("t_offsets must be positive and strictly increasing")
    p = model.params
    n_x, hidden = f.shape
    h = ad.reshape(f, (n_x, 1, hidden))
    h = ad.swish(ad.conv1d(h, p["decoder.conv1.w"], p["decoder.conv1.b"]))
    h = ad.conv1d(h, p["decoder.conv2.w"], p["decoder.conv2.b"])
    h = ad.reshape(h, (n_x, hidden))
    d = ad.matmul(h, p["decoder.lin.w"]) + p["decoder.lin.b"]  # [n_x, K]
    u_col = ad.reshape(ad.as_tensor(u_k), (n_x, 1))
    return ad.transpose(u_col + d * Tensor(t_offsets))


def forward(model: MpPdeModel, inputs: NodeInputs, graph: EdgeList | None = None) -> Tensor:
    """Full pass (encode, M processor layers, decode) on one tape."""
    cfg = model.config
    if graph is None:
        graph = build_graph(inputs.n_x, cfg.neighborhood_radius, inputs.params.boundary)
    if graph.n_nodes != inputs.n_x:
        raise ShapeMismatch(f"graph has {graph.n_nodes} nodes, inputs {inputs.n_x}")
    window = ad.as_tensor(inputs.window)
    window_t = ad.transpose(window)  # [n_x, K]
    theta = theta_features(inputs.params)
    dx = float(inputs.x_centers[1] - inputs.x_centers[0])
    # x_i - x_j along the ring: the signed neighbor offset, not the wrapped
    # coordinate difference.
    x_diff = -graph.offsets * dx

    f = encode(model, inputs)
    for m in range(cfg.num_layers):
        f_i = ad.gather(f, graph.dst)
        f_j = ad.gather(f, graph.src)
        u_diff = ad.gather(window_t, graph.dst) - ad.gather(window_t, graph.src)
        msg = message(model, m, f_i, f_j, u_diff, x_diff, theta)
        agg = ad.scatter_add(msg, graph.dst, graph.n_nodes)
        f = node_update(model, m, f, agg, theta)
    return decode(model, f, window_t[:, -1], inputs.t_offsets)


def rollout(
    model: MpPdeModel,
    initial_window: np.ndarray,
    grid: Grid,
    params: PdeParams,
    steps: int,
    graph: EdgeList | None = None,
) -> np.ndarray:
    """Autoregressively predict steps*K snapshots, feeding outputs back in.

    The initial window is taken to occupy the first K saved steps of the
    grid. Pure inference: nothing is recorded on a tape.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    k = model.config.bundle_size
    window = np.asarray(initial_window, dtype=np.float64)
    if window.shape != (k, grid.n_x):
        raise ShapeMismatch(f"initial window {window.shape}, expected {(k, grid.n_x)}")
    if graph is None:
        graph = build_graph(grid.n_x, model.config.neighborhood_radius, params.boundary)
    dt_save = grid.t_points[1] - grid.t_points[0]
    t_offsets = np.arange(1, k + 1) * dt_save
    x = grid.x_centers
    out = np.empty((steps * k, grid.n_x))
    with ad.no_grad():
        for step in range(steps):
            t_value = (k - 1 + step * k) * dt_save
            inputs = NodeInputs(window, x, t_value, grid.t_end, t_offsets, params)
            bundle = forward(model, inputs, graph).data
            if not np.all(np.isfinite(bundle)):
                raise SolutionBlowup(f"rollout diverged at bundle {step}")
            out[step * k : (step + 1) * k] = bundle
            window = bundle
    return out
