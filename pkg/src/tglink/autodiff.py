"""Dense float64 tensors with tape-based reverse-mode automatic differentiation.

Everything the models need is covered by scalars, vectors and matrices, so
ops are limited to ndim <= 2.  Forward ops record onto the innermost active
``Tape``; ``backward`` replays the tape in reverse and accumulates gradients
into every reachable tensor with ``requires_grad``.  With no active tape,
ops run forward-only (used for evaluation).

All stored values must be finite: any op producing NaN/Inf raises
``NonFiniteError`` at the point it appears.
"""

from __future__ import annotations

import math

import numpy as np

LN_EPS = 1e-5


class NonFiniteError(FloatingPointError):
    """A tensor value, activation or gradient is NaN or Inf."""


def _all_finite(arr: np.ndarray) -> bool:
    # Fast path: one reduction; any NaN/Inf element makes the sum non-finite.
    # A finite-but-overflowing sum falls back to the exact elementwise check.
    if math.isfinite(float(arr.sum())):
        return True
    return bool(np.isfinite(arr).all())


_TAPES: list["Tape"] = []


def _active_tape() -> "Tape | None":
    return _TAPES[-1] if _TAPES else None


class Tape:
    """Execution-ordered record of primitive ops, replayed in reverse by backward().

    Entries are appended in forward execution order, so inputs of every op
    precede it (topological order by construction).
    """

    __slots__ = ("_entries",)

    def __init__(self):
        self._entries: list[tuple[Tensor, tuple[Tensor, ...], object]] = []

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> bool:
        _TAPES.pop()
        return False

    def __len__(self) -> int:
        return len(self._entries)


class Tensor:
    """A float64 array with an optional gradient buffer.

    Data is immutable by convention once the tensor participates in a
    forward pass; only optimizers mutate leaf parameters, between steps.
    """

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not _all_finite(arr):
            raise NonFiniteError("tensor holds non-finite values")
        self.data = arr
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
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def sum(self, axis: int | None = None) -> "Tensor":
        return tsum(self, axis)

    def __add__(self, other):
        return add(self, _wrap(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __abs__(self):
        return absolute(self)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def parameter(data) -> Tensor:
    """A leaf tensor that collects gradients."""
    return Tensor(data, requires_grad=True)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, inputs: tuple[Tensor, ...], backward_fn) -> Tensor:
    """Build an op output, recording it when a tape is active and needed."""
    out = Tensor(data)
    tape = _active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape._entries.append((out, inputs, backward_fn))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def backward(loss: Tensor, tape: Tape) -> None:
    """Populate grads of every requires_grad tensor reachable from a scalar loss.

    Per-pass flow buffers are kept separate from the persistent .grad
    slots, so repeated calls without zeroing accumulate exactly once per
    call.
    """
    if loss.data.shape != ():
        raise ValueError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    flows: dict[int, list] = {id(loss): [loss, np.ones((), dtype=np.float64)]}
    for out, inputs, backward_fn in reversed(tape._entries):
        slot = flows.pop(id(out), None)
        if slot is None:
            continue
        g = slot[1]
        out._accumulate(g)
        for t, gi in zip(inputs, backward_fn(g)):
            if gi is None or not t.requires_grad:
                continue
            held = flows.get(id(t))
            if held is None:
                flows[id(t)] = [t, np.array(gi, dtype=np.float64, copy=True)]
            else:
                held[1] += gi
    for t, g in flows.values():
        t._accumulate(g)


# ---------------------------------------------------------------------------
# Primitive ops
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    def bwd(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _make(a.data + b.data, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    def bwd(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _make(a.data - b.data, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def bwd(g):
        return _unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape)

    return _make(a.data * b.data, (a, b), bwd)


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,))


def absolute(a: Tensor) -> Tensor:
    # Subgradient at 0 is taken as 0 (np.sign(0) == 0).
    return _make(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def relu(a: Tensor) -> Tensor:
    return _make(np.maximum(a.data, 0.0), (a,), lambda g: (g * (a.data > 0.0),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # Split by sign so exp never sees a positive argument (no overflow).
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _silu_grad(x: np.ndarray) -> np.ndarray:
    s = _sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


def silu(a: Tensor) -> Tensor:
    """Elementwise x * sigmoid(x)."""
    return _make(a.data * _sigmoid(a.data), (a,), lambda g: (g * _silu_grad(a.data),))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy 1-D/2-D semantics."""
    ad, bd = a.data, b.data
    if ad.shape[-1] != bd.shape[0]:
        raise ValueError(f"matmul inner dimensions differ: {ad.shape} @ {bd.shape}")

    def bwd(g):
        if ad.ndim == 2 and bd.ndim == 2:
            return g @ bd.T, ad.T @ g
        if ad.ndim == 1 and bd.ndim == 2:
            return bd @ g, np.outer(ad, g)
        if ad.ndim == 2 and bd.ndim == 1:
            return np.outer(g, bd), ad.T @ g
        return g * bd, g * ad  # 1-D dot

    return _make(ad @ bd, (a, b), bwd)


def transpose(a: Tensor) -> Tensor:
    return _make(a.data.T.copy(), (a,), lambda g: (g.T,))


def tsum(a: Tensor, axis: int | None = None) -> Tensor:
    shape = a.data.shape

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, shape),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape),)

    return _make(a.data.sum(axis=axis), (a,), bwd)


def stack(tensors: list[Tensor]) -> Tensor:
    """Stack same-shaped tensors along a new leading axis."""
    data = np.stack([t.data for t in tensors])

    def bwd(g):
        return tuple(g[i] for i in range(len(tensors)))

    return _make(data, tuple(tensors), bwd)


def concat_cols(tensors: list[Tensor]) -> Tensor:
    """Concatenate along the last axis (used to merge attention heads)."""
    widths = [t.data.shape[-1] for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=-1)

    def bwd(g):
        grads, off = [], 0
        for w in widths:
            grads.append(g[..., off:off + w])
            off += w
        return tuple(grads)

    return _make(data, tuple(tensors), bwd)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    def bwd(g):
        z = np.zeros_like(a.data)
        z[..., start:stop] = g
        return (z,)

    return _make(a.data[..., start:stop].copy(), (a,), bwd)


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    def bwd(g):
        z = np.zeros_like(a.data)
        z[start:stop] = g
        return (z,)

    return _make(a.data[start:stop].copy(), (a,), bwd)


def take_row(a: Tensor, i: int) -> Tensor:
    def bwd(g):
        z = np.zeros_like(a.data)
        z[i] = g
        return (z,)

    return _make(a.data[i].copy(), (a,), bwd)


def place_row(v: Tensor, shape: tuple[int, int], row: int, col_start: int) -> Tensor:
    """Embed a vector as part of one row of an otherwise-zero matrix."""
    n = v.data.shape[0]
    data = np.zeros(shape, dtype=np.float64)
    data[row, col_start:col_start + n] = v.data
    return _make(data, (v,), lambda g: (g[row, col_start:col_start + n],))


def place_col(v: Tensor, shape: tuple[int, int], col: int, row_start: int) -> Tensor:
    """Embed a vector as part of one column of an otherwise-zero matrix."""
    n = v.data.shape[0]
    data = np.zeros(shape, dtype=np.float64)
    data[row_start:row_start + n, col] = v.data
    return _make(data, (v,), lambda g: (g[row_start:row_start + n, col],))


def embedding_rows(table: Tensor, ids: np.ndarray) -> Tensor:
    """Gather rows of an embedding table by integer id."""
    ids = np.asarray(ids, dtype=np.intp)

    def bwd(g):
        z = np.zeros_like(table.data)
        np.add.at(z, ids, g)
        return (z,)

    return _make(table.data[ids], (table,), bwd)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = LN_EPS) -> Tensor:
    """Normalize over the last axis with population variance, then affine.

    For matrices each row is normalized independently; gain and bias are
    vectors of the row width.
    """
    if eps <= 0:
        raise ValueError("layer_norm eps must be positive")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def bwd(g):
        d_gain = _unbroadcast(g * xhat, gain.data.shape)
        d_bias = _unbroadcast(g, bias.data.shape)
        dxhat = g * gain.data
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return dx, d_gain, d_bias

    return _make(xhat * gain.data + bias.data, (x, gain, bias), bwd)


def softmax_row(x: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Row-wise softmax with max-subtraction; masked positions get weight 0.

    ``mask`` is a boolean keep-mask over the last axis, shared by all rows.
    """
    logits = x.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            raise ValueError("softmax_row: all positions masked")
        logits = np.where(mask, logits, -np.inf)
    mx = logits.max(axis=-1, keepdims=True)
    e = np.exp(logits - mx)
    y = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _make(y, (x,), bwd)


def swiglu_ffn(x: Tensor, w_in: Tensor, w_out: Tensor) -> Tensor:
    """SwiGLU feed-forward: split x @ w_in into (a, b), return (silu(a) * b) @ w_out."""
    f = w_out.data.shape[0]
    if w_in.data.shape[-1] != 2 * f:
        raise ValueError(
            f"swiglu_ffn width mismatch: w_in has {w_in.data.shape[-1]} columns, "
            f"w_out expects hidden width {f}"
        )
    h = matmul(x, w_in)
    a = slice_cols(h, 0, f)
    b = slice_cols(h, f, 2 * f)
    return matmul(mul(silu(a), b), w_out)
