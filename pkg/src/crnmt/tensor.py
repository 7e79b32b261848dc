"""Dense float64 tensors with reverse-mode automatic differentiation.

Every numerical primitive the translation model needs lives here. Ops run
eagerly on numpy arrays; while a Tape is active they also record a backward
closure, so the graph is rebuilt from scratch on each forward pass
(define-by-run) and variable-length sentences need no special casing.

Stability guards: softmax subtracts the per-axis max, sigmoid never
exponentiates a positive magnitude, and nll_loss goes through log-sum-exp
rather than the log of a normalized probability.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Operand shapes cannot be combined by the requested op."""


class Tape:
    """Records ops of one forward pass, in execution order.

    Execution order is already topological (an op's inputs exist before the
    op runs), so backward() is a single reverse sweep. A tape and the
    tensors recorded on it belong to one thread; use as a context manager:

        with Tape():
            loss = ...
            backward(loss)
    """

    _active: "Tape | None" = None

    def __init__(self) -> None:
        self._nodes: list[tuple[Tensor, tuple[Tensor, ...], object]] = []

    def __enter__(self) -> "Tape":
        if Tape._active is not None:
            raise RuntimeError("a tape is already active; tapes do not nest")
        Tape._active = self
        return self

    def __exit__(self, exc_type, exc, tb):
        Tape._active = None
        return False

    def __len__(self) -> int:
        return len(self._nodes)


class Tensor:
    """A dense float64 array plus an optional same-shape gradient.

    Leaf tensors created with requires_grad=True are trainable parameters;
    backward() accumulates into their .grad until zero_grad() clears it.
    """

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False) -> None:
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)

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

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _coerce(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(inputs: tuple[Tensor, ...], out_data: np.ndarray, backward_fn) -> Tensor:
    out = Tensor(out_data)
    tape = Tape._active
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape._nodes.append((out, inputs, backward_fn))
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        # copy: closures may hand the same array to several inputs
        t.grad = np.array(g)
    else:
        t.grad += g


def backward(loss: Tensor) -> None:
    """Populate .grad on every tensor the scalar loss depends on.

    Gradients of intermediate (tape-output) tensors are recomputed from
    scratch on each call; leaf gradients accumulate across calls until
    cleared, so call zero_grad between optimizer steps.
    """
    tape = Tape._active
    if tape is None:
        raise RuntimeError("backward() requires an active tape")
    if loss.data.size != 1:
        raise ValueError(f"backward() needs a scalar loss, got shape {loss.data.shape}")
    if not loss.requires_grad:
        raise ValueError("loss was not recorded on the active tape")
    for out, _, _ in tape._nodes:
        out.grad = None
    loss.grad = np.ones_like(loss.data)
    for out, inputs, fn in reversed(tape._nodes):
        if out.grad is None:
            continue  # branch not reachable from the loss
        grads = fn(out.grad)
        for t, g in zip(inputs, grads):
            if g is not None and t.requires_grad:
                _accumulate(t, g)


def _broadcast_shape(sa: tuple, sb: tuple, opname: str) -> tuple:
    if sa == sb:
        return sa
    try:
        return np.broadcast_shapes(sa, sb)
    except ValueError:
        raise ShapeError(f"{opname}: shapes {sa} and {sb} do not broadcast") from None


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum g over the dimensions that broadcasting expanded, back to shape."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _broadcast_shape(a.shape, b.shape, "add")

    def bwd(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _record((a, b), a.data + b.data, bwd)


def sub(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _broadcast_shape(a.shape, b.shape, "sub")

    def bwd(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _record((a, b), a.data - b.data, bwd)


def mul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _broadcast_shape(a.shape, b.shape, "mul")

    def bwd(g):
        return (_unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape))

    return _record((a, b), a.data * b.data, bwd)


def neg(a) -> Tensor:
    a = _coerce(a)

    def bwd(g):
        return (-g,)

    return _record((a,), -a.data, bwd)


def matmul(a, b) -> Tensor:
    """a @ b for a of shape (..., m, k) and b of shape (k, n)."""
    a, b = _coerce(a), _coerce(b)
    if a.ndim < 2 or b.ndim != 2:
        raise ShapeError(f"matmul: need (..., m, k) @ (k, n), got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    k, n = b.shape

    def bwd(g):
        da = g @ b.data.T
        db = a.data.reshape(-1, k).T @ g.reshape(-1, n)
        return da, db

    return _record((a, b), a.data @ b.data, bwd)


def tanh(a) -> Tensor:
    a = _coerce(a)
    out = np.tanh(a.data)

    def bwd(g):
        return (g * (1.0 - out * out),)

    return _record((a,), out, bwd)


def sigmoid(a) -> Tensor:
    a = _coerce(a)
    # exp is only ever applied to -|x|, so large inputs cannot overflow
    e = np.exp(-np.abs(a.data))
    out = np.where(a.data >= 0, 1.0 / (1.0 + e), e / (1.0 + e))

    def bwd(g):
        return (g * out * (1.0 - out),)

    return _record((a,), out, bwd)


def softmax(a, axis: int = -1) -> Tensor:
    a = _coerce(a)
    if not -a.ndim <= axis < a.ndim:
        raise ShapeError(f"softmax: axis {axis} invalid for shape {a.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        return ((g - (g * out).sum(axis=axis, keepdims=True)) * out,)

    return _record((a,), out, bwd)


def concat(a, b, axis: int = 0) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.ndim != b.ndim:
        raise ShapeError(f"concat: rank mismatch {a.shape} vs {b.shape}")
    ax = axis % a.ndim
    for i, (da, db) in enumerate(zip(a.shape, b.shape)):
        if i != ax and da != db:
            raise ShapeError(f"concat: non-axis dims differ at {i}: {a.shape} vs {b.shape}")
    split = a.shape[ax]

    def bwd(g):
        ga = np.take(g, range(split), axis=ax)
        gb = np.take(g, range(split, g.shape[ax]), axis=ax)
        return ga, gb

    return _record((a, b), np.concatenate([a.data, b.data], axis=ax), bwd)


def stack(tensors, axis: int = 0) -> Tensor:
    """Join same-shape tensors along a new axis."""
    ts = tuple(_coerce(t) for t in tensors)
    out = np.stack([t.data for t in ts], axis=axis)

    def bwd(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(ts)))

    return _record(ts, out, bwd)


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice [start, start+length) along one axis."""
    a = _coerce(a)
    ax = axis % a.ndim
    if start < 0 or start + length > a.shape[ax]:
        raise ShapeError(f"narrow: [{start},{start + length}) out of range for axis {ax} of {a.shape}")
    idx = tuple(slice(start, start + length) if i == ax else slice(None) for i in range(a.ndim))

    def bwd(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return (full,)

    return _record((a,), a.data[idx].copy(), bwd)


def reshape(a, shape) -> Tensor:
    a = _coerce(a)
    out = a.data.reshape(shape)

    def bwd(g):
        return (g.reshape(a.data.shape),)

    return _record((a,), out, bwd)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _coerce(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return _record((a,), out, bwd)


def embedding_lookup(table, ids) -> Tensor:
    """Gather rows of table by integer id; backward scatter-adds."""
    table = _coerce(table)
    ids = np.asarray(ids, dtype=np.int64)
    vocab = table.shape[0]
    if ids.size:
        flat = ids.reshape(-1)
        bad = np.nonzero((flat < 0) | (flat >= vocab))[0]
        if bad.size:
            pos = int(bad[0])
            raise IndexError(f"token id {int(flat[pos])} at position {pos} outside [0, {vocab})")
    out = table.data[ids]

    def bwd(g):
        dt = np.zeros_like(table.data)
        np.add.at(dt, ids, g)
        return (dt,)

    return _record((table,), out, bwd)


def conv1d(x, kernel, bias) -> Tensor:
    """1-d convolution over the time axis with SAME zero padding.

    x: (T, d_in) or (B, T, d_in); kernel: (n, d_in, d_out) with n odd;
    bias: (d_out,). Output keeps the input's rank and time length.
    """
    x, kernel, bias = _coerce(x), _coerce(kernel), _coerce(bias)
    if kernel.ndim != 3:
        raise ShapeError(f"conv1d: kernel must be (n, d_in, d_out), got {kernel.shape}")
    n, d_in, d_out = kernel.shape
    if n % 2 == 0:
        raise ValueError(f"conv1d: filter width must be odd, got {n}")
    squeeze = x.ndim == 2
    data = x.data[None] if squeeze else x.data
    if data.ndim != 3 or data.shape[2] != d_in:
        raise ShapeError(f"conv1d: input {x.shape} incompatible with kernel {kernel.shape}")
    batch, steps, _ = data.shape
    pad = (n - 1) // 2
    padded = np.zeros((batch, steps + n - 1, d_in))
    padded[:, pad:pad + steps] = data
    out = np.broadcast_to(bias.data, (batch, steps, d_out)).copy()
    for j in range(n):  # n is small; a matmul per tap beats one big einsum
        out += padded[:, j:j + steps] @ kernel.data[j]

    def bwd(g):
        go = g[None] if squeeze else g
        flat_go = go.reshape(-1, d_out)
        dk = np.empty_like(kernel.data)
        dpad = np.zeros_like(padded)
        for j in range(n):
            window = padded[:, j:j + steps]
            dk[j] = window.reshape(-1, d_in).T @ flat_go
            dpad[:, j:j + steps] += go @ kernel.data[j].T
        db = flat_go.sum(axis=0)
        dx = dpad[:, pad:pad + steps]
        return dx[0] if squeeze else dx, dk, db

    return _record((x, kernel, bias), out[0] if squeeze else out, bwd)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Standardize over the last axis, then scale and shift."""
    x, gain, bias = _coerce(x), _coerce(gain), _coerce(bias)
    if eps <= 0:
        raise ValueError(f"layer_norm: eps must be positive, got {eps}")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = ((x.data - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = xhat * gain.data + bias.data
    d = x.shape[-1]

    def bwd(g):
        dgain = (g * xhat).reshape(-1, d).sum(axis=0)
        dbias = g.reshape(-1, d).sum(axis=0)
        dxhat = g * gain.data
        dx = inv * (dxhat
                    - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        return dx, dgain, dbias

    return _record((x, gain, bias), out, bwd)


def nll_loss(scores, targets, mask) -> Tensor:
    """Masked mean negative log-likelihood of target ids under scores.

    scores holds unnormalized logits (or, equivalently, already-normalized
    log-probabilities) of shape (steps, V) or (B, steps, V); the
    normalizer is taken via log-sum-exp, so nothing here can hit log(0).
    Returns a scalar averaged over mask-selected positions.
    """
    scores = _coerce(scores)
    if scores.ndim < 2:
        raise ShapeError(f"nll_loss: scores must be (..., steps, V), got {scores.shape}")
    vocab = scores.shape[-1]
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    maskf = np.asarray(mask, dtype=np.float64).reshape(-1)
    flat = scores.data.reshape(-1, vocab)
    if targets.shape[0] != flat.shape[0] or maskf.shape[0] != flat.shape[0]:
        raise ShapeError(
            f"nll_loss: {flat.shape[0]} steps but {targets.shape[0]} targets / {maskf.shape[0]} mask entries")
    if targets.size and (targets.min() < 0 or targets.max() >= vocab):
        raise IndexError(f"nll_loss: target id outside [0, {vocab})")
    total = maskf.sum()
    if total == 0:
        raise ValueError("nll_loss: mask selects no positions")
    m = flat.max(axis=-1, keepdims=True)
    e = np.exp(flat - m)
    lse = m[:, 0] + np.log(e.sum(axis=-1))
    picked = flat[np.arange(flat.shape[0]), targets]
    out = np.asarray(((lse - picked) * maskf).sum() / total)

    def bwd(g):
        prob = e / e.sum(axis=-1, keepdims=True)
        d = prob
        d[np.arange(flat.shape[0]), targets] -= 1.0
        d *= (maskf / total)[:, None]
        d *= float(g)
        return (d.reshape(scores.data.shape),)

    return _record((scores,), out, bwd)
