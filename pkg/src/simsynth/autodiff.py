"""Reverse-mode automatic differentiation over numpy arrays.

All math runs in float64. Operations record onto the innermost active
``Tape``; with no tape active (or no differentiable parent) they are plain
numpy calls, so inference pays no tracking cost. Gradients are exact
reverse-mode, accumulated in creation (= topological) order reversed.
"""

from __future__ import annotations

import numpy as np

from .errors import GradError, ShapeError

__all__ = [
    "Tensor",
    "Tape",
    "grad",
    "constant",
    "add",
    "sub",
    "mul",
    "div",
    "matmul",
    "tsum",
    "tmean",
    "reshape",
    "concat",
    "getitem",
    "take_last",
    "exp",
    "log",
    "sqrt",
    "square",
    "sin",
    "tabs",
    "sigmoid",
    "tanh",
    "relu",
    "rfft_mag",
    "conv_full",
    "overlap_add",
]

_TAPES: list["Tape"] = []


class Tensor:
    """A float64 array plus the bookkeeping needed for backprop."""

    __slots__ = ("values", "requires_grad", "node")

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.node: _Node | None = None

    @property
    def shape(self):
        return self.values.shape

    @property
    def ndim(self):
        return self.values.ndim

    @property
    def size(self):
        return self.values.size

    def item(self) -> float:
        return float(self.values)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.values.shape}{flag})"

    # operator sugar; every path funnels through the module-level ops
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, key):
        return getitem(self, key)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


class _Node:
    """One recorded operation: parent links plus a local-gradient closure."""

    __slots__ = ("op", "parents", "backward", "out", "tape")

    def __init__(self, op, parents, backward, out, tape):
        self.op = op
        self.parents = parents
        self.backward = backward
        self.out = out
        self.tape = tape


class Tape:
    """Context manager that records operations for a later backward pass.

    ``nodes`` holds the records in creation order, which is a valid
    topological order of the graph; ``gradient`` walks it in reverse and
    visits each reachable node exactly once.
    """

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _TAPES.pop()
        return False

    def gradient(self, output: Tensor, inputs: list[Tensor]) -> list[np.ndarray]:
        """Gradients of a scalar ``output`` w.r.t. ``inputs``.

        Inputs not on the path from ``output`` get exact zeros.
        """
        if output.values.size != 1:
            raise GradError(f"grad needs a scalar output, got shape {output.values.shape}")
        grads: dict[int, np.ndarray] = {id(output): np.ones_like(output.values)}
        acc = _Accumulator(grads)
        for node in reversed(self.nodes):
            g = grads.get(id(node.out))
            if g is None:
                continue
            node.backward(g, acc)
        out = []
        for t in inputs:
            g = grads.get(id(t))
            out.append(np.zeros_like(t.values) if g is None else g)
        return out


class _Accumulator:
    """Adds backward contributions into per-tensor gradient buffers."""

    __slots__ = ("grads",)

    def __init__(self, grads):
        self.grads = grads

    def _wants(self, t: Tensor) -> bool:
        return t.requires_grad or t.node is not None

    def add(self, t: Tensor, value: np.ndarray):
        if not self._wants(t):
            return
        buf = self.grads.get(id(t))
        if buf is None:
            self.grads[id(t)] = np.zeros_like(t.values)
            buf = self.grads[id(t)]
        buf += value

    def buf(self, t: Tensor) -> np.ndarray | None:
        """Gradient buffer for in-place scatter updates; None if untracked."""
        if not self._wants(t):
            return None
        b = self.grads.get(id(t))
        if b is None:
            b = np.zeros_like(t.values)
            self.grads[id(t)] = b
        return b


def grad(scalar_output: Tensor, inputs: list[Tensor]) -> list[np.ndarray]:
    """Reverse-mode gradients using the tape that recorded ``scalar_output``."""
    if scalar_output.values.size != 1:
        raise GradError(f"grad needs a scalar output, got shape {scalar_output.values.shape}")
    if scalar_output.node is None:
        # constant output: nothing upstream, every input is off the path
        return [np.zeros_like(t.values) for t in inputs]
    return scalar_output.node.tape.gradient(scalar_output, inputs)


def constant(values) -> Tensor:
    return Tensor(values, requires_grad=False)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _record(op: str, out: Tensor, parents: tuple[Tensor, ...], backward) -> Tensor:
    tape = _TAPES[-1] if _TAPES else None
    if tape is None:
        return out
    if not any(p.requires_grad or p.node is not None for p in parents):
        return out
    node = _Node(op, parents, backward, out, tape)
    out.node = node
    tape.nodes.append(node)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to the parent's shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# arithmetic


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.values + b.values)

    def backward(g, acc):
        acc.add(a, _unbroadcast(g, a.values.shape))
        acc.add(b, _unbroadcast(g, b.values.shape))

    return _record("add", out, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.values - b.values)

    def backward(g, acc):
        acc.add(a, _unbroadcast(g, a.values.shape))
        acc.add(b, _unbroadcast(-g, b.values.shape))

    return _record("sub", out, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.values * b.values)

    def backward(g, acc):
        acc.add(a, _unbroadcast(g * b.values, a.values.shape))
        acc.add(b, _unbroadcast(g * a.values, b.values.shape))

    return _record("mul", out, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.values / b.values)

    def backward(g, acc):
        acc.add(a, _unbroadcast(g / b.values, a.values.shape))
        acc.add(b, _unbroadcast(-g * a.values / (b.values * b.values), b.values.shape))

    return _record("div", out, (a, b), backward)


def power(a, p: float) -> Tensor:
    a = _as_tensor(a)
    p = float(p)
    out = Tensor(a.values**p)

    def backward(g, acc):
        acc.add(a, g * p * a.values ** (p - 1.0))

    return _record("power", out, (a,), backward)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul expects operands with at least 2 dimensions")
    out = Tensor(np.matmul(a.values, b.values))

    def backward(g, acc):
        acc.add(a, _unbroadcast(np.matmul(g, np.swapaxes(b.values, -1, -2)), a.values.shape))
        acc.add(b, _unbroadcast(np.matmul(np.swapaxes(a.values, -1, -2), g), b.values.shape))

    return _record("matmul", out, (a, b), backward)


# ---------------------------------------------------------------------------
# reductions and shape


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(a.values.sum(axis=axis, keepdims=keepdims))

    def backward(g, acc):
        acc.add(a, _expand_reduced(g, a.values.shape, axis, keepdims))

    return _record("sum", out, (a,), backward)


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(a.values.mean(axis=axis, keepdims=keepdims))
    count = a.values.size if axis is None else _axis_count(a.values.shape, axis)

    def backward(g, acc):
        acc.add(a, _expand_reduced(g, a.values.shape, axis, keepdims) / count)

    return _record("mean", out, (a,), backward)


def _axis_count(shape, axis):
    if isinstance(axis, int):
        axis = (axis,)
    n = 1
    for ax in axis:
        n *= shape[ax]
    return n


def _expand_reduced(g, shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(g, shape).copy() if np.ndim(g) == 0 else np.full(shape, g)
    if not keepdims:
        if isinstance(axis, int):
            axis = (axis,)
        for ax in sorted(a % len(shape) for a in axis):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(a.values.reshape(shape))

    def backward(g, acc):
        acc.add(a, g.reshape(a.values.shape))

    return _record("reshape", out, (a,), backward)


def concat(parts, axis: int = -1) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    out = Tensor(np.concatenate([p.values for p in parts], axis=axis))
    sizes = [p.values.shape[axis] for p in parts]

    def backward(g, acc):
        offset = 0
        for p, s in zip(parts, sizes):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(offset, offset + s)
            acc.add(p, g[tuple(idx)])
            offset += s

    return _record("concat", out, tuple(parts), backward)


def getitem(a, key) -> Tensor:
    """Basic (slice/int) indexing; each source element appears at most once."""
    a = _as_tensor(a)
    out = Tensor(a.values[key])

    def backward(g, acc):
        buf = acc.buf(a)
        if buf is not None:
            buf[key] += g

    return _record("getitem", out, (a,), backward)


def take_last(a, indices: np.ndarray) -> Tensor:
    """Gather along the last axis with a fixed (possibly repeating) index array."""
    a = _as_tensor(a)
    idx = np.asarray(indices)
    out = Tensor(a.values[..., idx])
    lead = a.values.shape[:-1]

    def backward(g, acc):
        buf = acc.buf(a)
        if buf is None:
            return
        flat_buf = buf.reshape(-1, buf.shape[-1])
        flat_g = g.reshape(len(flat_buf), -1)
        flat_idx = idx.reshape(-1)
        rows = np.arange(len(flat_buf))[:, None]
        np.add.at(flat_buf, (rows, flat_idx[None, :]), flat_g)

    del lead
    return _record("take_last", out, (a,), backward)


# ---------------------------------------------------------------------------
# pointwise nonlinearities


def exp(a) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(np.exp(a.values))

    def backward(g, acc):
        acc.add(a, g * out.values)

    return _record("exp", out, (a,), backward)


def log(a) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(np.log(a.values))

    def backward(g, acc):
        acc.add(a, g / a.values)

    return _record("log", out, (a,), backward)


def sqrt(a) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(np.sqrt(a.values))

    def backward(g, acc):
        acc.add(a, g * 0.5 / out.values)

    return _record("sqrt", out, (a,), backward)


def square(a) -> Tensor:
    return mul(a, a)


def sin(a) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(np.sin(a.values))

    def backward(g, acc):
        acc.add(a, g * np.cos(a.values))

    return _record("sin", out, (a,), backward)


def tabs(a) -> Tensor:
    """|x| with subgradient 0 at 0."""
    a = _as_tensor(a)
    out = Tensor(np.abs(a.values))

    def backward(g, acc):
        acc.add(a, g * np.sign(a.values))

    return _record("abs", out, (a,), backward)


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    v = a.values
    out_vals = np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.abs(v))), np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))
    out = Tensor(out_vals)

    def backward(g, acc):
        acc.add(a, g * out.values * (1.0 - out.values))

    return _record("sigmoid", out, (a,), backward)


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(np.tanh(a.values))

    def backward(g, acc):
        acc.add(a, g * (1.0 - out.values * out.values))

    return _record("tanh", out, (a,), backward)


def relu(a) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(np.maximum(a.values, 0.0))

    def backward(g, acc):
        acc.add(a, g * (a.values > 0.0))

    return _record("relu", out, (a,), backward)


# ---------------------------------------------------------------------------
# spectral primitives


def rfft_mag(a) -> Tensor:
    """|RFFT| along the last axis.

    Backward maps the magnitude gradient onto the complex spectrum
    (zero where the magnitude vanishes) and applies the RFFT adjoint.
    """
    a = _as_tensor(a)
    n = a.values.shape[-1]
    spec = np.fft.rfft(a.values, axis=-1)
    mag = np.abs(spec)
    out = Tensor(mag)

    def backward(g, acc):
        safe = np.where(mag > 0.0, mag, 1.0)
        G = np.where(mag > 0.0, g / safe, 0.0) * spec
        G[..., 1 : (n + 1) // 2] *= 0.5
        acc.add(a, n * np.fft.irfft(G, n, axis=-1))

    return _record("rfft_mag", out, (a,), backward)


def _fft_conv_full(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Full linear convolution along the last axis via real FFT."""
    n = x.shape[-1] + k.shape[-1] - 1
    X = np.fft.rfft(x, n, axis=-1)
    K = np.fft.rfft(k, n, axis=-1)
    return np.fft.irfft(X * K, n, axis=-1)


def conv_full(x, k) -> Tensor:
    """Full 1-D linear convolution along the last axis, differentiable in both."""
    x, k = _as_tensor(x), _as_tensor(k)
    out = Tensor(_fft_conv_full(x.values, k.values))
    nx = x.values.shape[-1]
    nk = k.values.shape[-1]

    def backward(g, acc):
        # d/dx: correlate the upstream gradient with the kernel
        gx = _fft_conv_full(g, k.values[..., ::-1])[..., nk - 1 : nk - 1 + nx]
        acc.add(x, _unbroadcast(gx, x.values.shape))
        gk = _fft_conv_full(g, x.values[..., ::-1])[..., nx - 1 : nx - 1 + nk]
        acc.add(k, _unbroadcast(gk, k.values.shape))

    return _record("conv_full", out, (x, k), backward)


def overlap_add(frames, hop: int) -> Tensor:
    """Sum frames (..., N, L) into a buffer of length (N-1)*hop + L."""
    frames = _as_tensor(frames)
    *lead, n_frames, frame_len = frames.values.shape
    total = (n_frames - 1) * hop + frame_len
    vals = np.zeros((*lead, total))
    for i in range(n_frames):
        vals[..., i * hop : i * hop + frame_len] += frames.values[..., i, :]
    out = Tensor(vals)

    def backward(g, acc):
        gf = np.empty_like(frames.values)
        for i in range(n_frames):
            gf[..., i, :] = g[..., i * hop : i * hop + frame_len]
        acc.add(frames, gf)

    return _record("overlap_add", out, (frames,), backward)
