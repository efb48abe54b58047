"""Adaptive-moment (Adam) parameter updates."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .tensor import NonFiniteError, Tensor


class OptimizerStateError(RuntimeError):
    """A parameter reached the optimizer without a gradient."""


@dataclass
class OptimizerState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


def optimizer_step(params: Mapping[str, Tensor], state: OptimizerState) -> dict[str, Tensor]:
    """Apply one bias-corrected Adam update and return the new parameters.

    Tensors are immutable, so updated parameters are fresh leaves; gradients
    of the old ones are cleared.
    """
    missing = [name for name, p in params.items() if p.grad is None]
    if missing:
        raise OptimizerStateError(f"no gradient for parameter(s): {', '.join(sorted(missing))}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    updated = {}
    for name, p in params.items():
        g = p.grad
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.first_moment[name] = m
        state.second_moment[name] = v
        new = p.data - state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)
        if not np.isfinite(new).all():
            raise NonFiniteError(f"optimizer produced non-finite values in {name!r}")
        p.grad = None
        updated[name] = Tensor(new, requires_grad=True)
    return updated
