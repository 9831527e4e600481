"""Differentiable primitives.

Each primitive computes its forward value with numpy (or a compiled
kernel) and records a vector-Jacobian product on the active tape.
Broadcasting is supported for ``add`` and ``multiply``; gradients are
summed back to the operand shapes.
"""
from __future__ import annotations

import builtins

import numpy as np

from . import kernels
from .tensor import ShapeError, Tensor, make_output

MASK_VALUE = -1e9
LAYER_NORM_EPS = 1e-5


def _shape_error(op, a, b):
    return ShapeError(f"{op}: incompatible shapes {tuple(a)} and {tuple(b)}")


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _require_finite(op, x):
    if not np.isfinite(x).all():
        raise FloatingPointError(f"{op}: non-finite input")


def _as_2d(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(x.reshape(-1, x.shape[-1]))


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data + b.data
    except ValueError:
        raise _shape_error("add", a.shape, b.shape) from None
    sa, sb = a.shape, b.shape
    return make_output("add", out, (a, b),
                       lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def multiply(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data * b.data
    except ValueError:
        raise _shape_error("multiply", a.shape, b.shape) from None
    ad, bd = a.data, b.data

    def vjp(g):
        ga = _unbroadcast(g * bd, ad.shape) if a.requires_grad else None
        gb = _unbroadcast(g * ad, bd.shape) if b.requires_grad else None
        return ga, gb

    return make_output("multiply", out, (a, b), vjp)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return make_output("scale", a.data * c, (a,), lambda g: (g * c,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes (numpy semantics)."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise _shape_error("matmul", a.shape, b.shape)
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise _shape_error("matmul", a.shape, b.shape) from None
    ad, bd = a.data, b.data

    def vjp(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(bd, -1, -2)), ad.shape)
        if b.requires_grad:
            if bd.ndim == 2:
                gb = _as_2d(ad).T @ _as_2d(g)
            else:
                gb = _unbroadcast(np.matmul(np.swapaxes(ad, -1, -2), g), bd.shape)
        return ga, gb

    return make_output("matmul", out, (a, b), vjp)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = list(tensors)
    datas = [t.data for t in tensors]
    try:
        out = np.concatenate(datas, axis=axis)
    except ValueError:
        raise ShapeError(
            "concat: incompatible shapes " + ", ".join(str(d.shape) for d in datas)
        ) from None
    splits = np.cumsum([d.shape[axis] for d in datas])[:-1]

    def vjp(g):
        return np.split(g, splits, axis=axis)

    return make_output("concat", out, tuple(tensors), vjp)


def _tanh_grad(y, g):
    return g * (1.0 - y * y)


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    # looked up at call time so a test can swap in a broken derivative
    return make_output("tanh", y, (a,), lambda g: (_tanh_grad(y, g),))


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    return make_output("exp", y, (a,), lambda g: (g * y,))


def log(a: Tensor) -> Tensor:
    _require_finite("log", a.data)
    if (a.data <= 0).any():
        raise FloatingPointError("log: non-positive input")
    x = a.data
    return make_output("log", np.log(x), (a,), lambda g: (g / x,))


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis."""
    _require_finite("softmax", a.data)
    shape = a.shape
    y = kernels.softmax_fwd(_as_2d(a.data))

    def vjp(g):
        return (kernels.softmax_bwd(y, _as_2d(g)).reshape(shape),)

    return make_output("softmax", y.reshape(shape), (a,), vjp)


def log_softmax(a: Tensor) -> Tensor:
    """Numerically stable log of the last-axis softmax."""
    _require_finite("log_softmax", a.data)
    shape = a.shape
    y = kernels.log_softmax_fwd(_as_2d(a.data))

    def vjp(g):
        return (kernels.log_softmax_bwd(y, _as_2d(g)).reshape(shape),)

    return make_output("log_softmax", y.reshape(shape), (a,), vjp)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    d = a.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise _shape_error("layer_norm", a.shape, gain.shape)
    shape = a.shape
    out, xhat, rstd = kernels.layer_norm_fwd(_as_2d(a.data), gain.data, bias.data, eps)

    def vjp(g):
        dx, dgain, dbias = kernels.layer_norm_bwd(_as_2d(g), xhat, rstd, gain.data)
        return dx.reshape(shape), dgain, dbias

    return make_output("layer_norm", out.reshape(shape), (a, gain, bias), vjp)


def embedding_lookup(table: Tensor, indices) -> Tensor:
    """Rows of a 2-D ``table`` gathered by an integer index array of any shape."""
    idx = np.asarray(indices, dtype=np.intp)
    if table.ndim != 2:
        raise _shape_error("embedding_lookup", table.shape, idx.shape)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexError(
            f"embedding_lookup: index out of range for table of {table.shape[0]} rows"
        )
    out = table.data[idx]
    n_rows, width = table.shape
    flat = np.ascontiguousarray(idx.reshape(-1))

    def vjp(g):
        return (kernels.scatter_add_rows(n_rows, flat, np.ascontiguousarray(g.reshape(-1, width))),)

    return make_output("embedding_lookup", out, (table,), vjp)


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = np.sum(a.data, axis=axis, keepdims=keepdims)
    shape = a.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return make_output("sum", out, (a,), vjp)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = np.mean(a.data, axis=axis, keepdims=keepdims)
    shape = a.shape
    count = a.data.size // max(out.size, 1)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, shape).copy(),)

    return make_output("mean", out, (a,), vjp)


def masked_fill(a: Tensor, mask, value: float = MASK_VALUE) -> Tensor:
    """Replace entries where ``mask`` is True by ``value``; those entries get zero gradient."""
    mask = np.asarray(mask, dtype=bool)
    try:
        out = np.where(mask, value, a.data)
    except ValueError:
        raise _shape_error("masked_fill", a.shape, mask.shape) from None
    if out.shape != a.shape:
        raise _shape_error("masked_fill", a.shape, mask.shape)
    return make_output("masked_fill", out, (a,), lambda g: (np.where(mask, 0.0, g),))


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise _shape_error("reshape", old, shape) from None
    return make_output("reshape", out, (a,), lambda g: (g.reshape(old),))


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out = np.ascontiguousarray(np.transpose(a.data, axes))
    return make_output("transpose", out, (a,), lambda g: (np.transpose(g, inverse),))


def slice(a: Tensor, index) -> Tensor:
    """Basic (and integer-array) indexing with scatter-back gradients."""
    out = a.data[index]
    shape = a.shape
    basic = _is_basic(index)

    def vjp(g):
        full = np.zeros(shape)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return make_output("slice", np.array(out, copy=True), (a,), vjp)


def _is_basic(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return builtins.all(
        isinstance(i, (int, np.integer, builtins.slice)) or i is None or i is Ellipsis
        for i in items
    )


def pick(a: Tensor, indices) -> Tensor:
    """Select one entry along the last axis per leading position."""
    idx = np.asarray(indices, dtype=np.intp)
    if idx.shape != a.shape[:-1]:
        raise _shape_error("pick", a.shape, idx.shape)
    shape = a.shape
    out = np.take_along_axis(a.data, idx[..., None], axis=-1)[..., 0]

    def vjp(g):
        full = np.zeros(shape)
        np.put_along_axis(full, idx[..., None], g[..., None], axis=-1)
        return (full,)

    return make_output("pick", out, (a,), vjp)


# composites

def sigmoid(a: Tensor) -> Tensor:
    return add(scale(tanh(scale(a, 0.5)), 0.5), Tensor(0.5))


def square(a: Tensor) -> Tensor:
    return multiply(a, a)


def dropout(a: Tensor, rate: float, rng) -> Tensor:
    if rate <= 0.0 or rng is None:
        return a
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return multiply(a, Tensor(keep))
