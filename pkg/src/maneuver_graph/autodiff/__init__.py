"""Minimal reverse-mode automatic differentiation over numpy arrays."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .ops import (
    DimensionError,
    DomainError,
    add,
    concat,
    cross_entropy,
    gather_rows,
    getitem,
    matmul,
    mean_pool,
    mul,
    relu,
    reshape,
    sigmoid,
    softmax,
    stack,
    sub,
    tanh,
    transpose,
)
from .optim import OptimizerState, OptimizerStateError, optimizer_step
from .tensor import (
    ComputationTape,
    NonFiniteError,
    TapeError,
    Tensor,
    backward,
    current_tape,
    no_grad,
)

__all__ = [
    "CheckpointError",
    "ComputationTape",
    "DimensionError",
    "DomainError",
    "NonFiniteError",
    "OptimizerState",
    "OptimizerStateError",
    "TapeError",
    "Tensor",
    "add",
    "backward",
    "concat",
    "cross_entropy",
    "current_tape",
    "gather_rows",
    "getitem",
    "load_checkpoint",
    "matmul",
    "mean_pool",
    "mul",
    "no_grad",
    "optimizer_step",
    "relu",
    "reshape",
    "save_checkpoint",
    "sigmoid",
    "softmax",
    "stack",
    "sub",
    "tanh",
    "transpose",
]
