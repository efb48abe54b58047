"""Dense float64 tensors recorded on a per-thread reverse-mode tape."""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterator, Optional, Sequence

import numpy as np


class NonFiniteError(FloatingPointError):
    """An operation produced NaN or Inf."""


class DomainError(ValueError):
    """Operand values are outside an op's domain (empty axis, bad labels...)."""


class TapeError(DomainError):
    """Misuse of the differentiation tape (non-scalar loss, foreign tensor...)."""


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class _Record:
    __slots__ = ("out", "inputs", "backward", "name")

    def __init__(self, out, inputs, backward, name):
        self.out = out
        self.inputs = inputs
        self.backward = backward
        self.name = name


class ComputationTape:
    """Ordered log of differentiable operations for one thread.

    Operations are appended in execution order, so inputs always precede the
    operations that consume them and a reversed sweep is a valid topological
    order for the backward pass.
    """

    def __init__(self) -> None:
        self.records: list[_Record] = []

    def __len__(self) -> int:
        return len(self.records)

    def record(self, out: "Tensor", inputs: tuple["Tensor", ...], backward: BackwardFn, name: str) -> None:
        self.records.append(_Record(out, inputs, backward, name))

    def reset(self) -> None:
        self.records.clear()


class _State(threading.local):
    def __init__(self) -> None:
        self.tape = ComputationTape()
        self.grad_enabled = True


_state = _State()


def current_tape() -> ComputationTape:
    return _state.tape


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Run forward computations without recording them."""
    previous = _state.grad_enabled
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


def is_grad_enabled() -> bool:
    return _state.grad_enabled


class Tensor:
    """Immutable dense array of float64 values.

    ``grad`` is only written by :func:`backward` (accumulating) and cleared by
    :meth:`zero_grad` or an optimizer step.
    """

    __slots__ = ("data", "requires_grad", "grad", "_produced", "__weakref__")

    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(())
        if not np.isfinite(arr).all():
            raise NonFiniteError("tensor data contains NaN or Inf")
        arr.setflags(write=False)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._produced = False

    @classmethod
    def _from_op(cls, data: np.ndarray, inputs: tuple["Tensor", ...], backward: BackwardFn, name: str) -> "Tensor":
        if not np.isfinite(data).all():
            raise NonFiniteError(f"{name} produced non-finite values")
        out = cls.__new__(cls)
        data = np.asarray(data, dtype=np.float64)
        data.setflags(write=False)
        out.data = data
        out.grad = None
        out._produced = True
        track = _state.grad_enabled and any(t.requires_grad for t in inputs)
        out.requires_grad = track
        if track:
            _state.tape.record(out, inputs, backward, name)
        return out

    # ------------------------------------------------------------------ info
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return not self._produced

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({np.array2string(self.data, precision=4)}{flag})"

    def __len__(self) -> int:
        return self.data.shape[0]

    # ------------------------------------------------------------ operators
    def __add__(self, other):
        from . import ops

        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops

        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops

        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return ops.mul(self, 1.0 / float(other))

    def __neg__(self):
        from . import ops

        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from . import ops

        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops

        return ops.getitem(self, index)

    def reshape(self, *shape):
        from . import ops

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from . import ops

        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes or None)

    def sum(self, axis=None):
        from . import ops

        return ops.sum(self, axis)

    def mean(self, axis=None):
        from . import ops

        if axis is None:
            return ops.mul(ops.sum(self), 1.0 / self.size)
        return ops.mean_pool(self, axis)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every leaf that ``loss`` depends on.

    The current thread's tape is consumed: after the sweep it is reset, so a
    second call on the same graph raises.
    """
    if not isinstance(loss, Tensor):
        raise TapeError("backward expects a Tensor")
    if loss.size != 1:
        raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise TapeError("loss does not depend on any tensor with requires_grad=True")
    tape = _state.tape
    if loss.is_leaf:
        loss.grad = np.ones_like(loss.data) if loss.grad is None else loss.grad + 1.0
        tape.reset()
        return
    if not any(rec.out is loss for rec in reversed(tape.records)):
        raise TapeError("loss is not on the current tape (already consumed?)")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    for rec in reversed(tape.records):
        g = grads.pop(id(rec.out), None)
        for t in rec.inputs:
            if t.requires_grad and t.is_leaf:
                leaves.setdefault(id(t), t)
        if g is None:
            continue
        input_grads = rec.backward(g)
        for t, gi in zip(rec.inputs, input_grads):
            if gi is None or not t.requires_grad:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
    tape.reset()
    for key, leaf in leaves.items():
        g = grads.get(key)
        if g is None:
            g = np.zeros_like(leaf.data)
        if not np.isfinite(g).all():
            raise NonFiniteError("non-finite gradient reached a leaf tensor")
        leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g
