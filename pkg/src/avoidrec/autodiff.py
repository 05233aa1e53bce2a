"""Minimal reverse-mode automatic differentiation over numpy arrays.

A deliberately bounded op set: what the ranking model needs and nothing
more.  Ops executed while a ComputationRecord is active append entries in
execution order, so replaying the entry list backwards visits every node
exactly once with all adjoints already accumulated.  Ops executed with no
active record are plain forward evaluation (used for scoring).

Broadcasting is restricted to bias-style adds; every other op requires
exact shape agreement and raises ShapeError otherwise.  Training runs in
float32; float64 exists for gradient checking.
"""

from __future__ import annotations

import math

import numpy as np

DEFAULT_DTYPE = np.float32


class ShapeError(ValueError):
    pass


class Tensor:
    """A numpy array plus an optional gradient accumulator."""

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.data.shape}, dtype={self.data.dtype})"


def parameter(data, name=None, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name, dtype=dtype)


def constant(data, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=False, dtype=dtype)


class _Entry:
    __slots__ = ("op", "inputs", "out", "backward_fn")

    def __init__(self, op, inputs, out, backward_fn):
        self.op = op
        self.inputs = inputs
        self.out = out
        self.backward_fn = backward_fn


class ComputationRecord:
    """Ordered log of executed ops; context manager activates it."""

    _active = None

    def __init__(self):
        self.entries: list[_Entry] = []
        self._produced: set[int] = set()
        self._leaves: dict[int, Tensor] = {}

    def __enter__(self):
        if ComputationRecord._active is not None:
            raise RuntimeError("a ComputationRecord is already active")
        ComputationRecord._active = self
        return self

    def __exit__(self, exc_type, exc, tb):
        ComputationRecord._active = None
        return False

    def last_op(self):
        return self.entries[-1].op if self.entries else None

    def _append(self, op, inputs, out, backward_fn):
        for t in inputs:
            if t.requires_grad and id(t) not in self._produced:
                self._leaves[id(t)] = t
        self.entries.append(_Entry(op, inputs, out, backward_fn))
        self._produced.add(id(out))

    def _tracks(self, *tensors):
        return any(t.requires_grad or id(t) in self._produced for t in tensors)

    def backward(self, loss: Tensor):
        """Populate ``grad`` on every leaf reachable on this record.

        Gradients accumulate into existing ``grad`` arrays (callers zero
        them between batches); leaves recorded but not on any path to the
        loss receive zeros.
        """
        if loss.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
        adjoint = {id(loss): np.ones_like(loss.data)}
        for entry in reversed(self.entries):
            g = adjoint.pop(id(entry.out), None)
            if g is None:
                continue
            for t, gt in zip(entry.inputs, entry.backward_fn(g)):
                if gt is None:
                    continue
                if not (t.requires_grad or id(t) in self._produced):
                    continue
                key = id(t)
                if key in adjoint:
                    adjoint[key] = adjoint[key] + gt
                else:
                    adjoint[key] = gt
        for key, leaf in self._leaves.items():
            g = adjoint.get(key)
            if g is None:
                g = np.zeros_like(leaf.data)
            leaf.grad = g if leaf.grad is None else leaf.grad + g


def _record(op, inputs, out_data, backward_fn):
    out = Tensor(out_data, dtype=out_data.dtype)
    rec = ComputationRecord._active
    if rec is not None and rec._tracks(*inputs):
        rec._append(op, tuple(inputs), out, backward_fn)
    return out


def _need_2d(op, *tensors):
    for t in tensors:
        if t.data.ndim != 2:
            raise ShapeError(f"{op}: expected 2-D operand, got shape {t.data.shape}")


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise add; ``b`` may also be a (n,) or (1, n) bias over rows."""
    if a.data.shape == b.data.shape:
        return _record("add", (a, b), a.data + b.data, lambda g: (g, g))
    if a.data.ndim == 2 and b.data.ndim == 1 and b.data.shape[0] == a.data.shape[1]:
        return _record("add", (a, b), a.data + b.data,
                       lambda g: (g, g.sum(axis=0)))
    if a.data.ndim == 2 and b.data.shape == (1, a.data.shape[1]):
        return _record("add", (a, b), a.data + b.data,
                       lambda g: (g, g.sum(axis=0, keepdims=True)))
    raise ShapeError(f"add: incompatible shapes {a.data.shape} and {b.data.shape}")


def add_scalar(a: Tensor, c: float) -> Tensor:
    return _record("add_scalar", (a,), a.data + a.data.dtype.type(c), lambda g: (g,))


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul: incompatible shapes {a.data.shape} and {b.data.shape}")
    return _record("mul", (a, b), a.data * b.data,
                   lambda g: (g * b.data, g * a.data))


def scale(a: Tensor, c: float) -> Tensor:
    c = a.data.dtype.type(c)
    return _record("scale", (a,), a.data * c, lambda g: (g * c,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _need_2d("matmul", a, b)
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.data.shape} and {b.data.shape}")
    return _record("matmul", (a, b), a.data @ b.data,
                   lambda g: (g @ b.data.T, a.data.T @ g))


def transpose(a: Tensor) -> Tensor:
    _need_2d("transpose", a)
    return _record("transpose", (a,), np.ascontiguousarray(a.data.T),
                   lambda g: (np.ascontiguousarray(g.T),))


def concat(parts, axis: int) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ShapeError("concat: no operands")
    _need_2d("concat", *parts)
    if axis not in (0, 1):
        raise ShapeError(f"concat: axis must be 0 or 1, got {axis}")
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward_fn(g):
        return tuple(
            g[offsets[i]:offsets[i + 1]] if axis == 0 else g[:, offsets[i]:offsets[i + 1]]
            for i in range(len(parts)))

    try:
        out = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from None
    return _record("concat", tuple(parts), out, backward_fn)


def slice_(a: Tensor, rows=slice(None), cols=slice(None)) -> Tensor:
    """Basic rectangular slicing of a 2-D tensor."""
    _need_2d("slice", a)
    key = (rows, cols)

    def backward_fn(g):
        ga = np.zeros_like(a.data)
        ga[key] = g
        return (ga,)

    return _record("slice", (a,), a.data[key].copy(), backward_fn)


def _unary(op, a, out_data, dfn):
    return _record(op, (a,), out_data, lambda g: (dfn(g),))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    e = np.exp(-np.abs(x))
    y = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype)
    return _unary("sigmoid", a, y, lambda g: g * y * (1.0 - y))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _unary("tanh", a, y, lambda g: g * (1.0 - y * y))


def relu(a: Tensor) -> Tensor:
    y = np.maximum(a.data, 0)
    return _unary("relu", a, y, lambda g: g * (a.data > 0))


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    return _unary("exp", a, y, lambda g: g * y)


def log(a: Tensor) -> Tensor:
    return _unary("log", a, np.log(a.data), lambda g: g / a.data)


def sin(a: Tensor) -> Tensor:
    return _unary("sin", a, np.sin(a.data), lambda g: g * np.cos(a.data))


def softmax(a: Tensor, axis: int, mask: np.ndarray | None = None) -> Tensor:
    """Softmax along ``axis`` with optional boolean keep-mask.

    Masked positions get exactly zero weight and zero gradient.  The
    stabilizing max subtraction is treated as a constant shift, which is
    exact for softmax.  A fully masked row is an error: callers decide
    what an empty distribution means.
    """
    x = a.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        if not mask.any(axis=axis).all():
            raise ShapeError("softmax: a row has no unmasked entries")
        x = np.where(mask, x, -np.inf)
    m = np.max(x, axis=axis, keepdims=True)
    e = np.exp(x - m)
    y = e / e.sum(axis=axis, keepdims=True)
    y = y.astype(a.data.dtype)

    def backward_fn(g):
        inner = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - inner),)

    return _record("softmax", (a,), y, backward_fn)


def embedding_lookup(table: Tensor, ids) -> Tensor:
    """Gather rows of ``table``; gradient scatter-adds into the looked-up rows."""
    _need_2d("embedding_lookup", table)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1:
        raise ShapeError(f"embedding_lookup: ids must be 1-D, got shape {ids.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise IndexError(f"embedding_lookup: id outside [0, {table.data.shape[0]})")

    def backward_fn(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    return _record("embedding_lookup", (table,), table.data[ids], backward_fn)


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Dense layer x @ w + b with b of shape (out,)."""
    _need_2d("affine", x, w)
    if b.data.ndim != 1 or x.data.shape[1] != w.data.shape[0] or b.data.shape[0] != w.data.shape[1]:
        raise ShapeError(
            f"affine: incompatible shapes x{x.data.shape} w{w.data.shape} b{b.data.shape}")
    out = x.data @ w.data + b.data

    def backward_fn(g):
        return (g @ w.data.T, x.data.T @ g, g.sum(axis=0))

    return _record("affine", (x, w, b), out, backward_fn)


def sliding_window_concat(a: Tensor, h: int) -> Tensor:
    """Per row i, concatenate rows i-h .. i+h (zeros beyond the ends).

    Turns an (m, d) matrix into (m, (2h+1)*d); window 0 is the identity.
    """
    _need_2d("sliding_window_concat", a)
    if h < 0:
        raise ShapeError(f"sliding_window_concat: window half-width {h} < 0")
    m, d = a.data.shape
    padded = np.zeros((m + 2 * h, d), dtype=a.data.dtype)
    padded[h:h + m] = a.data
    out = np.concatenate([padded[k:k + m] for k in range(2 * h + 1)], axis=1)

    def backward_fn(g):
        gp = np.zeros_like(padded)
        for k in range(2 * h + 1):
            gp[k:k + m] += g[:, k * d:(k + 1) * d]
        return (gp[h:h + m],)

    return _record("sliding_window_concat", (a,), out, backward_fn)


def repeat_rows(a: Tensor, n: int) -> Tensor:
    """Tile a (1, d) row n times; gradient sums back over the copies."""
    if a.data.ndim != 2 or a.data.shape[0] != 1:
        raise ShapeError(f"repeat_rows: expected shape (1, d), got {a.data.shape}")
    out = np.repeat(a.data, n, axis=0)
    return _record("repeat_rows", (a,), out,
                   lambda g: (g.sum(axis=0, keepdims=True),))


def sum_(a: Tensor) -> Tensor:
    """Total of all entries as a (1, 1) scalar."""
    out = a.data.sum(dtype=a.data.dtype).reshape(1, 1)
    return _record("sum", (a,), out, lambda g: (np.full_like(a.data, g[0, 0]),))


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def grad_check(fn, params, eps=1e-5, max_coords_per_param=64, seed=0) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``fn`` rebuilds the forward pass from the current parameter data and
    returns a scalar Tensor.  Relative error per sampled coordinate is
    |analytic - numeric| / (|analytic| + |numeric| + 1e-8).
    """
    params = list(params)
    for p in params:
        p.grad = None
    with ComputationRecord() as rec:
        loss = fn()
    rec.backward(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        n = flat.size
        if n <= max_coords_per_param:
            coords = np.arange(n)
        else:
            coords = rng.choice(n, size=max_coords_per_param, replace=False)
        for idx in coords:
            orig = flat[idx]
            flat[idx] = orig + eps
            f_plus = float(fn().data.reshape(()))
            flat[idx] = orig - eps
            f_minus = float(fn().data.reshape(()))
            flat[idx] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = float(ga.reshape(-1)[idx])
            rel = abs(a - numeric) / (abs(a) + abs(numeric) + 1e-8)
            worst = max(worst, rel)
    for p in params:
        p.grad = None
    return worst


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, dtype=None):
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(
        dtype if dtype is not None else DEFAULT_DTYPE)
