"""Parameter naming and initialisation.

Names follow ``<block>.<index>.<weight>[.<relation>]``:

* ``embed.E_o``                          object-type table, ``2 x d``
* ``mrgcn.{k}.W_r.{top_left,...}``       per-relation weights of layer ``k``
* ``mrgcn.{k}.W_s``                      self-loop weight of layer ``k``
* ``lstm.W_{i,f,o,g}`` / ``lstm.U_*`` / ``lstm.b_*``   input, recurrent, bias
* ``attn.{m}.W_q`` / ``W_k`` / ``W_v``   projections of head ``m``
* ``head.W_l`` / ``head.b_l``            classifier

Every tensor is drawn from its own stream seeded by ``(seed, name)``, so two
configs that share a parameter name share its initial value.
"""

from __future__ import annotations

import numpy as np

from .._seeding import rng_for
from ..autodiff import Tensor
from ..scene_graph import RELATIONS
from .config import N_CLASSES, ModelConfig

GATES = ("i", "f", "o", "g")


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def baseline_input_dim(n_max: int) -> int:
    return (n_max - 1) * 4


def param_shapes(config: ModelConfig) -> dict[str, tuple]:
    shapes: dict[str, tuple] = {}
    if config.uses_graph:
        shapes["embed.E_o"] = (2, config.embed_dim)
        d_in = config.embed_dim
        for k, d_out in enumerate(config.mrgcn_dims):
            for r in RELATIONS:
                shapes[f"mrgcn.{k}.W_r.{r.key}"] = (d_in, d_out)
            shapes[f"mrgcn.{k}.W_s"] = (d_in, d_out)
            d_in = d_out
        seq_in = d_in
        hidden = d_in
    else:
        if not config.n_max or config.n_max < 2:
            raise ValueError("positional-feature variants need n_max >= 2")
        seq_in = baseline_input_dim(config.n_max)
        hidden = config.baseline_hidden
    if config.uses_lstm:
        for g in GATES:
            shapes[f"lstm.W_{g}"] = (seq_in, hidden)
            shapes[f"lstm.U_{g}"] = (hidden, hidden)
            shapes[f"lstm.b_{g}"] = (hidden,)
    if config.uses_attention:
        d = config.temporal_dim
        for m in range(config.heads):
            shapes[f"attn.{m}.W_q"] = (d, config.key_dim)
            shapes[f"attn.{m}.W_k"] = (d, config.key_dim)
            shapes[f"attn.{m}.W_v"] = (d, config.value_dim)
    shapes["head.W_l"] = (config.head_dim, N_CLASSES)
    shapes["head.b_l"] = (N_CLASSES,)
    return shapes


def init_params(config: ModelConfig, seed: int | None = None) -> dict[str, Tensor]:
    seed = config.seed if seed is None else seed
    params = {}
    for name, shape in param_shapes(config).items():
        rng = rng_for(seed, "init", name)
        if name == "embed.E_o":
            value = rng.normal(0.0, 0.02, size=shape)
        elif len(shape) == 1:
            value = np.full(shape, 1.0 if name == "lstm.b_f" else 0.0)
        else:
            value = glorot(rng, *shape)
        params[name] = Tensor(value, requires_grad=True)
    return params


def check_params(params, config: ModelConfig) -> None:
    expected = param_shapes(config)
    missing = sorted(set(expected) - set(params))
    extra = sorted(set(params) - set(expected))
    if missing or extra:
        raise ValueError(f"parameters do not match config (missing={missing}, unexpected={extra})")
    for name, shape in expected.items():
        if tuple(params[name].shape) != tuple(shape):
            raise ValueError(f"parameter {name!r} has shape {params[name].shape}, expected {shape}")
