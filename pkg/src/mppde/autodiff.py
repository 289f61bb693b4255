"""Dense float64 tensors with reverse-mode autodiff on an explicit tape.

Covers exactly the operations the message-passing model and its losses
need. Ops record onto the active tape (opened with `with Tape() as tape:`)
whenever gradients are enabled and some input is tracked; outside a tape
context, or under no_grad(), everything is plain numpy at float64.

    with Tape() as tape:
        loss = mse(x @ w, y)
    grads = backward(loss)          # {node_id: Tensor}, one entry per leaf
    dw = grads[w.node_id]

A tape is an append-only node list in topological order, so the backward
sweep is a single reversed pass visiting each node once. Leaves register
lazily on first use; `detach` cuts a value off the tape.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .exceptions import IndexOutOfBounds, NotScalar, ShapeMismatch

_STATE = threading.local()


def _current_tape() -> "Tape | None":
    if not getattr(_STATE, "grad_enabled", True):
        return None
    return getattr(_STATE, "tape", None)


class no_grad:
    """Context manager suppressing tape recording (used by detached passes)."""

    def __enter__(self):
        self._prev = getattr(_STATE, "grad_enabled", True)
        _STATE.grad_enabled = False
        return self

    def __exit__(self, *exc):
        _STATE.grad_enabled = self._prev
        return False


@dataclass
class TapeNode:
    op: str
    input_ids: tuple  # node id per input; None marks an untracked constant
    backward: Callable | None  # grad_out -> per-input grads; None for leaves
    is_param: bool = False  # leaf with requires_grad


class Tape:
    """Append-only operation record enabling one reverse sweep."""

    def __init__(self):
        self.nodes: list[TapeNode] = []

    def __enter__(self):
        self._prev = getattr(_STATE, "tape", None)
        _STATE.tape = self
        return self

    def __exit__(self, *exc):
        _STATE.tape = self._prev
        return False

    def signature(self) -> tuple:
        """Structure of the recorded graph (for purity checks)."""
        return tuple((n.op, n.input_ids) for n in self.nodes)

    def _append(self, node: TapeNode) -> int:
        self.nodes.append(node)
        return len(self.nodes) - 1

    def _register(self, tensor: "Tensor") -> int:
        """Give a tensor a node on this tape, lazily for leaves."""
        if tensor.tape is self and tensor.node_id is not None:
            return tensor.node_id
        node_id = self._append(TapeNode("leaf", (), None, tensor.requires_grad))
        tensor.tape = self
        tensor.node_id = node_id
        return node_id


class Tensor:
    """Dense float64 array, optionally tracked on a tape."""

    __slots__ = ("data", "requires_grad", "tape", "node_id")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.tape: Tape | None = None
        self.node_id: int | None = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    def detach(self) -> "Tensor":
        """Same values, cut from any tape; gradients stop here."""
        return Tensor(self.data)

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take(self, key)

    def sum(self):
        return tsum(self)

    def mean(self):
        return tmean(self)

    def reshape(self, shape):
        return reshape(self, shape)

    def transpose(self, axes=None):
        return transpose(self, axes)

    @property
    def T(self):
        return transpose(self, None)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _is_live(t: Tensor, tape: Tape) -> bool:
    return t.requires_grad or (t.tape is tape and t.node_id is not None)


def _record(op: str, data: np.ndarray, inputs: tuple, backward: Callable) -> Tensor:
    """Build the output tensor, recording a tape node when anything is live."""
    tape = _current_tape()
    out = Tensor(data)
    if tape is None:
        return out
    live = [_is_live(t, tape) for t in inputs]
    if not any(live):
        return out
    ids = tuple(tape._register(t) if lv else None for t, lv in zip(inputs, live))
    out.tape = tape
    out.node_id = tape._append(TapeNode(op, ids, backward))
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Adjoint of numpy broadcasting: reduce grad down to `shape`."""
    g = grad
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, s in enumerate(shape):
        if s == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise and structural ops
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError as err:
        raise ShapeMismatch(f"add: {a.shape} vs {b.shape}") from err

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record("add", data, (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data - b.data
    except ValueError as err:
        raise ShapeMismatch(f"sub: {a.shape} vs {b.shape}") from err

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record("sub", data, (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError as err:
        raise ShapeMismatch(f"mul: {a.shape} vs {b.shape}") from err

    def bwd(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _record("mul", data, (a, b), bwd)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _record("neg", -a.data, (a,), lambda g: (-g,))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def bwd(g):
        return g @ b.data.T, a.data.T @ g

    return _record("matmul", data, (a, b), bwd)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    if not tensors:
        raise ShapeMismatch("concat of zero tensors")
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as err:
        raise ShapeMismatch(f"concat: {[t.shape for t in tensors]}") from err
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record("concat", data, tensors, bwd)


def take(a, key) -> Tensor:
    """Basic slicing/indexing; the backward scatters into a zero array."""
    a = as_tensor(a)
    data = a.data[key]

    def bwd(g):
        z = np.zeros(a.shape)
        np.add.at(z, key, g)
        return (z,)

    return _record("slice", np.asarray(data), (a,), bwd)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        data = a.data.reshape(shape)
    except ValueError as err:
        raise ShapeMismatch(f"reshape {a.shape} -> {shape}") from err
    return _record("reshape", data, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    data = np.transpose(a.data, axes)
    inverse = None if axes is None else tuple(np.argsort(axes))
    return _record("transpose", data, (a,), lambda g: (np.transpose(g, inverse),))


# ---------------------------------------------------------------------------
# nonlinearity, convolution, graph kernels, reductions
# ---------------------------------------------------------------------------

def swish(a) -> Tensor:
    """x * sigmoid(x), smooth everywhere (keeps gradient checks honest)."""
    a = as_tensor(a)
    s = 1.0 / (1.0 + np.exp(-a.data))
    data = a.data * s

    def bwd(g):
        return (g * s * (1.0 + a.data * (1.0 - s)),)

    return _record("swish", data, (a,), bwd)


def conv1d(x, kernel, bias=None) -> Tensor:
    """1D convolution [n, c_in, L] * [c_out, c_in, k] -> [n, c_out, L].

    Stride 1, zero padding chosen to preserve length; k must be odd.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.data.ndim != 3 or kernel.data.ndim != 3:
        raise ShapeMismatch(f"conv1d: x {x.shape}, kernel {kernel.shape}")
    n, c_in, length = x.shape
    c_out, c_in_k, k = kernel.shape
    if c_in != c_in_k or k % 2 != 1:
        raise ShapeMismatch(f"conv1d: x {x.shape} incompatible with kernel {kernel.shape}")
    pad = (k - 1) // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad)))
    data = np.zeros((n, c_out, length))
    for t in range(k):
        data += np.einsum("ncl,oc->nol", xp[:, :, t : t + length], kernel.data[:, :, t])

    inputs = [x, kernel]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (c_out,):
            raise ShapeMismatch(f"conv1d bias {bias.shape}, expected ({c_out},)")
        data = data + bias.data[None, :, None]
        inputs.append(bias)

    def bwd(g):
        gx_pad = np.zeros_like(xp)
        gw = np.zeros(kernel.shape)
        for t in range(k):
            gx_pad[:, :, t : t + length] += np.einsum(
                "nol,oc->ncl", g, kernel.data[:, :, t]
            )
            gw[:, :, t] = np.einsum("nol,ncl->oc", g, xp[:, :, t : t + length])
        gx = gx_pad[:, :, pad : pad + length] if pad else gx_pad
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2))

    return _record("conv1d", data, tuple(inputs), bwd)


def _check_index(index: np.ndarray, size: int, op: str) -> np.ndarray:
    index = np.asarray(index)
    if index.ndim != 1 or not np.issubdtype(index.dtype, np.integer):
        raise IndexOutOfBounds(f"{op}: index must be a 1D integer vector")
    if index.size and (index.min() < 0 or index.max() >= size):
        raise IndexOutOfBounds(f"{op}: index outside [0, {size})")
    return index


def scatter_add(src, index, size: int) -> Tensor:
    """out[i] = sum of src rows whose index equals i; out has `size` rows."""
    src = as_tensor(src)
    index = _check_index(index, size, "scatter_add")
    if index.shape[0] != src.shape[0]:
        raise ShapeMismatch(f"scatter_add: {src.shape[0]} rows vs {index.shape[0]} indices")
    data = np.zeros((size,) + src.shape[1:])
    np.add.at(data, index, src.data)
    return _record("scatter_add", data, (src,), lambda g: (g[index],))


def gather(src, index) -> Tensor:
    """out[i] = src[index[i]] along the leading axis."""
    src = as_tensor(src)
    index = _check_index(index, src.shape[0], "gather")
    data = src.data[index]

    def bwd(g):
        z = np.zeros(src.shape)
        np.add.at(z, index, g)
        return (z,)

    return _record("gather", data, (src,), bwd)


def tsum(a) -> Tensor:
    a = as_tensor(a)
    data = np.asarray(a.data.sum())
    return _record("sum", data, (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))


def tmean(a) -> Tensor:
    a = as_tensor(a)
    data = np.asarray(a.data.mean())
    scale = 1.0 / a.size

    def bwd(g):
        return (np.broadcast_to(g * scale, a.shape).copy(),)

    return _record("mean", data, (a,), bwd)


def mse(pred, target) -> Tensor:
    """Mean squared error over all elements (a scalar)."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"mse: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    data = np.asarray(np.mean(diff**2))
    scale = 2.0 / pred.size

    def bwd(g):
        gp = g * scale * diff
        return gp, -gp

    return _record("mse", data, (pred, target), bwd)


def detach(a) -> Tensor:
    return as_tensor(a).detach()


# ---------------------------------------------------------------------------
# reverse sweep
# ---------------------------------------------------------------------------

def backward(loss: Tensor) -> dict[int, Tensor]:
    """Gradients of a scalar on-tape loss for every reached requires_grad leaf.

    Returns {node_id: Tensor}; look gradients up via `param.node_id`. Leaves
    reachable only through detach() are absent.
    """
    if not isinstance(loss, Tensor) or loss.size != 1:
        raise NotScalar("backward() needs a scalar tensor")
    tape = loss.tape
    if tape is None or loss.node_id is None:
        raise NotScalar("backward() needs a loss recorded on a tape")
    grads: list[np.ndarray | None] = [None] * len(tape.nodes)
    grads[loss.node_id] = np.ones_like(loss.data)
    for nid in range(loss.node_id, -1, -1):
        g = grads[nid]
        node = tape.nodes[nid]
        if g is None or node.backward is None:
            continue
        for iid, gin in zip(node.input_ids, node.backward(g)):
            if iid is None or gin is None:
                continue
            grads[iid] = gin if grads[iid] is None else grads[iid] + gin
    return {
        nid: Tensor(grads[nid])
        for nid, node in enumerate(tape.nodes)
        if node.is_param and grads[nid] is not None
    }
