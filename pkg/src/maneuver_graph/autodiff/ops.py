"""Differentiable operations over :class:`Tensor`.

Each op computes its forward value with numpy and registers a closure that maps
the upstream gradient to one gradient per input.  Broadcasting is limited to
what numpy's elementwise rules give ``add``/``mul`` (bias rows, scalars).
"""

from __future__ import annotations

import builtins
from typing import Optional, Sequence

import numpy as np

from .tensor import DomainError, Tensor, as_tensor


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _check_axis(axis: int, ndim: int) -> int:
    if not -ndim <= axis < ndim:
        raise DimensionError(f"axis {axis} out of range for {ndim}-d tensor")
    return axis % ndim


# ---------------------------------------------------------------- arithmetic
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError as exc:
        raise DimensionError(f"cannot add shapes {a.shape} and {b.shape}") from exc
    sa, sb = a.shape, b.shape
    return Tensor._from_op(out, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data - b.data
    except ValueError as exc:
        raise DimensionError(f"cannot subtract shapes {a.shape} and {b.shape}") from exc
    sa, sb = a.shape, b.shape
    return Tensor._from_op(out, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a, b) -> Tensor:
    """Elementwise product; a python scalar operand is treated as a constant."""
    a = as_tensor(a)
    if not isinstance(b, Tensor):
        c = float(b)
        return Tensor._from_op(a.data * c, (a,), lambda g: (g * c,), "scale")
    try:
        out = a.data * b.data
    except ValueError as exc:
        raise DimensionError(f"cannot multiply shapes {a.shape} and {b.shape}") from exc
    ad, bd = a.data, b.data
    need_a, need_b = a.requires_grad, b.requires_grad

    def backward(g):
        ga = _unbroadcast(g * bd, ad.shape) if need_a else None
        gb = _unbroadcast(g * ad, bd.shape) if need_b else None
        return ga, gb

    return Tensor._from_op(out, (a, b), backward, "mul")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product.

    ``a`` may carry leading batch axes.  ``b`` is either a single matrix shared
    by every batch entry or carries the same batch axes as ``a``.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError("matmul needs operands with at least 2 dimensions")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise DimensionError(f"matmul batch dimensions differ: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    out = ad @ bd

    need_a, need_b = a.requires_grad, b.requires_grad

    def backward(g):
        ga = gb = None
        if bd.ndim == 2:
            if need_a:
                ga = g @ bd.T
            if need_b:
                gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            if need_a:
                ga = g @ np.swapaxes(bd, -1, -2)
            if need_b:
                gb = np.swapaxes(ad, -1, -2) @ g
        return ga, gb

    return Tensor._from_op(out, (a, b), backward, "matmul")


def sum(x: Tensor, axis: Optional[int] = None) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    shape = x.shape
    if axis is None:
        return Tensor._from_op(np.array(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, shape).copy(),), "sum")
    axis = _check_axis(axis, x.ndim)
    out = x.data.sum(axis=axis)
    return Tensor._from_op(
        out, (x,), lambda g: (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),), "sum"
    )


def mean_pool(x: Tensor, axis: int) -> Tensor:
    """Arithmetic mean along ``axis`` (the axis is removed)."""
    x = as_tensor(x)
    axis = _check_axis(axis, x.ndim)
    length = x.shape[axis]
    if length < 1:
        raise DomainError("mean_pool over an empty axis")
    shape = x.shape
    out = x.data.mean(axis=axis)

    def backward(g):
        return (np.broadcast_to(np.expand_dims(g, axis) / length, shape).copy(),)

    return Tensor._from_op(out, (x,), backward, "mean_pool")


# ---------------------------------------------------------------- nonlinear
def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return Tensor._from_op(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    # split by sign so exp never overflows
    z = np.exp(-np.abs(x.data))
    out = np.where(x.data >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    return Tensor._from_op(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def tanh(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)
    return Tensor._from_op(out, (x,), lambda g: (g * (1.0 - out * out),), "tanh")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    axis = _check_axis(axis, x.ndim)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor._from_op(out, (x,), backward, "softmax")


# ------------------------------------------------------------------ shaping
def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    src = x.shape
    try:
        out = x.data.reshape(tuple(shape))
    except ValueError as exc:
        raise DimensionError(f"cannot reshape {src} to {tuple(shape)}") from exc
    return Tensor._from_op(out, (x,), lambda g: (g.reshape(src),), "reshape")


def transpose(x: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    x = as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    axes = tuple(axes)
    if sorted(a % x.ndim for a in axes) != list(range(x.ndim)):
        raise DimensionError(f"invalid transpose axes {axes} for {x.ndim}-d tensor")
    inverse = tuple(np.argsort(axes))
    return Tensor._from_op(x.data.transpose(axes), (x,), lambda g: (g.transpose(inverse),), "transpose")


def getitem(x: Tensor, index) -> Tensor:
    """Basic (view) indexing: ints and slices only."""
    x = as_tensor(x)
    items = index if isinstance(index, tuple) else (index,)
    for item in items:
        if not (isinstance(item, (int, np.integer, slice)) or item is Ellipsis):
            raise TypeError("only integer/slice indexing is differentiable")
    out = x.data[index]
    shape = x.shape

    def backward(g):
        full = np.zeros(shape)
        full[index] = g
        return (full,)

    return Tensor._from_op(out, (x,), backward, "getitem")


def gather_rows(x: Tensor, index) -> Tensor:
    """Pick rows along axis -2 separately for each leading batch entry.

    ``x`` is ``(B, ..., n, d)`` and ``index`` an integer array ``(B, m)``; the
    result is ``(B, ..., m, d)`` with ``out[b, ..., k, :] = x[b, ..., index[b, k], :]``.
    Repeated indices accumulate their gradients.
    """
    x = as_tensor(x)
    index = np.asarray(index, dtype=np.int64)
    if x.ndim < 3 or index.ndim != 2 or index.shape[0] != x.shape[0]:
        raise DimensionError(f"gather_rows needs x (B, ..., n, d) and index (B, m); got {x.shape}, {index.shape}")
    if index.size and (index.min() < 0 or index.max() >= x.shape[-2]):
        raise DimensionError("gather_rows index out of range")
    batch = np.arange(x.shape[0])[:, None]
    out = np.moveaxis(np.moveaxis(x.data, -2, 1)[batch, index], 1, -2)
    shape = x.shape

    def backward(g):
        full = np.zeros((shape[0], shape[-2]) + shape[1:-2] + shape[-1:])
        np.add.at(full, (batch, index), np.moveaxis(g, -2, 1))
        return (np.moveaxis(full, 1, -2),)

    return Tensor._from_op(out, (x,), backward, "gather_rows")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("concat of an empty list")
    if len(tensors) == 1:
        return tensors[0]
    ndim = tensors[0].ndim
    axis = _check_axis(axis, ndim)
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != ndim or any(t.shape[i] != ref[i] for i in range(ndim) if i != axis):
            raise DimensionError(f"concat shapes incompatible along axis {axis}: {ref} vs {t.shape}")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        parts = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            sl = [builtins.slice(None)] * ndim
            sl[axis] = builtins.slice(int(lo), int(hi))
            parts.append(g[tuple(sl)])
        return parts

    return Tensor._from_op(out, tuple(tensors), backward, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("stack of an empty list")
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != ref:
            raise DimensionError(f"stack needs equal shapes: {ref} vs {t.shape}")
    axis = _check_axis(axis, len(ref) + 1)
    out = np.stack([t.data for t in tensors], axis=axis)
    count = len(tensors)

    def backward(g):
        return [np.take(g, i, axis=axis) for i in range(count)]

    return Tensor._from_op(out, tuple(tensors), backward, "stack")


# -------------------------------------------------------------------- losses
def cross_entropy(
    logits: Tensor,
    labels,
    mask=None,
    weights=None,
) -> Tensor:
    """Masked softmax cross-entropy over the rows of an ``n x c`` logit matrix.

    Without ``weights`` the loss is the mean of ``-log softmax(logits)[label]``
    over rows where ``mask`` is true.  With ``weights`` (one non-negative value
    per row) the masked rows are combined as ``sum(w * nll)`` instead, which is
    how per-sequence means are accumulated inside one padded batch.
    """
    logits = as_tensor(logits)
    if logits.ndim != 2:
        raise DimensionError(f"cross_entropy expects n x c logits, got {logits.shape}")
    n, c = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise DimensionError(f"labels must have shape ({n},), got {labels.shape}")
    mask = np.ones(n, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if mask.shape != (n,):
        raise DimensionError(f"mask must have shape ({n},), got {mask.shape}")
    if not mask.any():
        raise DomainError("cross_entropy mask selects no rows")
    picked = labels[mask].astype(np.int64)
    if picked.min() < 0 or picked.max() >= c:
        raise DomainError(f"labels must lie in [0, {c})")
    rows = np.flatnonzero(mask)
    if weights is None:
        w = np.full(rows.size, 1.0 / rows.size)
    else:
        w = np.asarray(weights, dtype=np.float64)[mask]
    z = logits.data[rows]
    shifted = z - z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1))
    nll = logsum - shifted[np.arange(rows.size), picked]
    loss = float((w * nll).sum())

    def backward(g):
        probs = np.exp(shifted - logsum[:, None])
        probs[np.arange(rows.size), picked] -= 1.0
        full = np.zeros((n, c))
        full[rows] = probs * (w * float(g))[:, None]
        return (full,)

    return Tensor._from_op(np.array(loss), (logits,), backward, "cross_entropy")
