"""Network layers written against the tape engine.

Tensors flowing through the temporal part use the layout ``(B, T, n, d)``:
batch of sequences, frames, nodes, features.
"""

from __future__ import annotations

import math
from typing import Mapping, Optional

import numpy as np

from ..autodiff import (
    DimensionError,
    Tensor,
    concat,
    gather_rows,
    mean_pool,
    relu,
    sigmoid,
    softmax,
    stack,
    tanh,
)
from ..scene_graph import RELATIONS, SceneGraph, degree_normalize
from .params import GATES


def _normalized_adjacency(graph_or_adj) -> np.ndarray:
    if isinstance(graph_or_adj, SceneGraph):
        return degree_normalize(graph_or_adj.adjacency)
    return np.asarray(graph_or_adj, dtype=np.float64)


def _vertical_weights(layer: Mapping[str, Tensor], prefix: str) -> Tensor:
    """``[W_top_left; W_top_right; W_bottom_left; W_bottom_right; W_s]``."""
    mats = [layer[f"{prefix}W_r.{r.key}"] for r in RELATIONS] + [layer[f"{prefix}W_s"]]
    return concat(mats, axis=0)


def mrgcn_layer(graph, H: Tensor, params: Mapping[str, Tensor], prefix: str = "", rows=None) -> Tensor:
    """``ReLU(sum_r A_r_hat H W_r + H W_s)``.

    ``graph`` is a :class:`SceneGraph` or an already degree-normalised
    ``(..., 4, n, n)`` array whose leading axes match those of ``H``.
    ``rows`` (an integer array ``(B, m)``, batched input only) restricts the
    output to the selected nodes; neighbours are still read from all of ``H``.
    Neighbour features are averaged per relation first and projected after,
    i.e. ``(A_r_hat H) W_r``.
    """
    adj = _normalized_adjacency(graph)
    n = adj.shape[-1]
    if H.shape[-2] != n:
        raise DimensionError(f"feature rows ({H.shape[-2]}) != graph nodes ({n})")
    W = _vertical_weights(params, prefix)
    d_in = H.shape[-1]
    if W.shape[0] != 5 * d_in:
        raise DimensionError(f"layer expects {W.shape[0] // 5} input features, got {d_in}")
    if rows is not None:
        rows = np.asarray(rows, dtype=np.int64)
        adj = _pick_rows(adj, rows)
        self_rows = gather_rows(H, rows)
    else:
        self_rows = H
    lead = adj.shape[:-3]
    m = adj.shape[-2]
    if lead != H.shape[:-2]:
        raise DimensionError(f"adjacency leading axes {lead} do not match features {H.shape[:-2]}")
    stacked = Tensor(adj.reshape(lead + (4 * m, n)))  # relation-major rows
    agg = stacked @ H
    agg = agg.reshape(*lead, 4, m, d_in)
    axes = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
    agg = agg.transpose(axes).reshape(*lead, m, 4 * d_in)
    return relu(concat([agg, self_rows], axis=-1) @ W)


def _pick_rows(adj: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """``adj[b, ..., r, rows[b], :]`` for ``(B, ..., 4, n, n)`` adjacency."""
    moved = np.moveaxis(adj, -2, 1)  # (B, n, ..., 4, n)
    out = moved[np.arange(adj.shape[0])[:, None], rows]  # (B, m, ..., 4, n)
    return np.ascontiguousarray(np.moveaxis(out, 1, -2))


def first_layer_inputs(adj_norm: np.ndarray, onehot: np.ndarray) -> np.ndarray:
    """Relation-averaged type indicators ``[A_1 X | ... | A_4 X | X]``.

    With ``h0 = X E_o`` (a type lookup) the first MR-GCN layer equals
    ``ReLU(inputs @ [E_o W_1; ...; E_o W_4; E_o W_s])``, which avoids pushing
    the ``d``-wide embedding through every relation.
    """
    onehot = np.broadcast_to(onehot, adj_norm.shape[:-3] + onehot.shape[-2:])
    parts = [adj_norm[..., r, :, :] @ onehot for r in range(adj_norm.shape[-3])]
    parts.append(onehot)
    return np.concatenate(parts, axis=-1)


def first_mrgcn_layer(type_inputs: np.ndarray, E_o: Tensor, layer: Mapping[str, Tensor], prefix: str = "") -> Tensor:
    mats = [layer[f"{prefix}W_r.{r.key}"] for r in RELATIONS] + [layer[f"{prefix}W_s"]]
    projected = concat([E_o @ W for W in mats], axis=0)  # (5*|O|, d_out)
    return relu(Tensor(type_inputs) @ projected)


def spatial_encode(adj_norm: np.ndarray, onehot: np.ndarray, params: Mapping[str, Tensor], n_layers: int, rows=None) -> Tensor:
    """Stacked MR-GCN over every frame: ``(..., 4, n, n)`` -> ``(..., n, d_K)``.

    With ``rows`` the last layer is evaluated only for those nodes.
    """
    inputs = first_layer_inputs(adj_norm, onehot)
    if n_layers == 1 and rows is not None:
        inputs = _pick_rows(inputs[..., None, :, :], np.asarray(rows, dtype=np.int64))[..., 0, :, :]
    h = first_mrgcn_layer(inputs, params["embed.E_o"], params, "mrgcn.0.")
    for k in range(1, n_layers):
        h = mrgcn_layer(adj_norm, h, params, f"mrgcn.{k}.", rows=rows if k == n_layers - 1 else None)
    return h


# ------------------------------------------------------------------- LSTM
def _gate_weights(params: Mapping[str, Tensor]):
    W = concat([params[f"lstm.W_{g}"] for g in GATES], axis=1)
    U = concat([params[f"lstm.U_{g}"] for g in GATES], axis=1)
    b = concat([params[f"lstm.b_{g}"] for g in GATES], axis=0)
    return W, U, b


def _cell(pre: Tensor, cell_prev: Optional[Tensor], hidden: int):
    i = sigmoid(pre[..., :hidden])
    f = sigmoid(pre[..., hidden : 2 * hidden])
    o = sigmoid(pre[..., 2 * hidden : 3 * hidden])
    g = tanh(pre[..., 3 * hidden :])
    cell = i * g if cell_prev is None else f * cell_prev + i * g
    return o * tanh(cell), cell


def lstm_step(E_t: Tensor, state, params: Mapping[str, Tensor]):
    """One LSTM step applied row-wise: returns ``(h_t, (h_t, c_t))``.

    ``state`` is ``(h_prev, c_prev)`` or ``None`` for the zero state.
    """
    W, U, b = _gate_weights(params)
    hidden = U.shape[0]
    if E_t.shape[-1] != W.shape[0]:
        raise DimensionError(f"LSTM input width {E_t.shape[-1]} != {W.shape[0]}")
    pre = E_t @ W + b
    if state is None:
        h, c = _cell(pre, None, hidden)
    else:
        h_prev, c_prev = state
        if h_prev.shape[-1] != hidden or c_prev.shape != h_prev.shape:
            raise DimensionError("LSTM state shape mismatch")
        h, c = _cell(pre + h_prev @ U, c_prev, hidden)
    return h, (h, c)


def lstm(E: Tensor, params: Mapping[str, Tensor]) -> Tensor:
    """Run the LSTM over axis 1 of ``(B, T, n, d)`` from a zero state."""
    W, U, b = _gate_weights(params)
    hidden = U.shape[0]
    if E.shape[-1] != W.shape[0]:
        raise DimensionError(f"LSTM input width {E.shape[-1]} != {W.shape[0]}")
    XW = E @ W + b
    outputs = []
    h = c = None
    for t in range(E.shape[1]):
        pre = XW[:, t]
        if h is not None:
            pre = pre + h @ U
        h, c = _cell(pre, c, hidden)
        outputs.append(h)
    return stack(outputs, axis=1)


# -------------------------------------------------------------- attention
def multi_head_attention(C: Tensor, params: Mapping[str, Tensor], n_heads: int, return_weights: bool = False):
    """Self-attention over the time axis, independently for every node.

    ``C`` is ``(B, T, n, d)``; the result is ``(B, T, n, M * d_v)`` with the
    heads concatenated in index order.
    """
    B, T, n, d = C.shape
    Wq = concat([params[f"attn.{m}.W_q"] for m in range(n_heads)], axis=1)
    Wk = concat([params[f"attn.{m}.W_k"] for m in range(n_heads)], axis=1)
    Wv = concat([params[f"attn.{m}.W_v"] for m in range(n_heads)], axis=1)
    if Wq.shape[0] != d:
        raise DimensionError(f"attention input width {d} != {Wq.shape[0]}")
    d_k = Wq.shape[1] // n_heads
    d_v = Wv.shape[1] // n_heads

    def heads(x: Tensor, width: int) -> Tensor:
        # (B, T, n, M*w) -> (B, n, M, T, w)
        return x.reshape(B, T, n, n_heads, width).transpose(0, 2, 3, 1, 4)

    Q = heads(C @ Wq, d_k)
    K = heads(C @ Wk, d_k)
    V = heads(C @ Wv, d_v)
    scores = (Q @ K.transpose(0, 1, 2, 4, 3)) * (1.0 / math.sqrt(d_k))
    weights = softmax(scores, axis=-1)
    Z = (weights @ V).transpose(0, 3, 1, 2, 4).reshape(B, T, n, n_heads * d_v)
    if return_weights:
        return Z, weights
    return Z


# ------------------------------------------------------------- classifier
def classify(Z: Tensor, params: Mapping[str, Tensor]) -> Tensor:
    """Average over time (axis 1) then project to class logits."""
    U = mean_pool(Z, axis=1)
    return U @ params["head.W_l"] + params["head.b_l"]
