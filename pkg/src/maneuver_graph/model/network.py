"""Batched forward pass for every architecture variant.

Sequences are put into canonical node order (ascending ``node_id``) before
anything is computed, so the output for a node never depends on where it sat
in the input; results are mapped back to the caller's order afterwards.
Sequences in a batch are zero-padded to a common node count.  Padding nodes
have no edges and a zero type vector, so they never influence real nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from ..autodiff import Tensor, cross_entropy
from ..scene_graph import NodeType, SceneSequence, degree_normalize
from .config import N_CLASSES, ModelConfig
from .layers import classify, lstm, multi_head_attention, spatial_encode


@dataclass
class PreparedSequence:
    """Constant arrays for one sequence in canonical node order."""

    order: np.ndarray  # canonical position -> original index
    adj_norm: Optional[np.ndarray]  # (T, 4, n, n)
    onehot: np.ndarray  # (n, 2)
    labels: np.ndarray  # (n,) class index, -1 on landmarks
    vehicle_rows: np.ndarray  # canonical indices of vehicles
    features: Optional[np.ndarray] = None  # (T, n_vehicles, F) for positional baselines

    @property
    def n(self) -> int:
        return self.onehot.shape[0]

    @property
    def n_vehicles(self) -> int:
        return self.vehicle_rows.size


def prepare(seq: SceneSequence, config: ModelConfig) -> PreparedSequence:
    order = np.argsort(np.asarray(seq.node_ids, dtype=np.int64), kind="stable")
    types = seq.node_types[order]
    onehot = np.zeros((len(order), 2))
    onehot[np.arange(len(order)), types] = 1.0
    labels = seq.label_vector()[order]
    vehicle_rows = np.flatnonzero(types == NodeType.VEHICLE)
    if config.uses_graph:
        adj = seq.adjacency()[:, :, order][:, :, :, order]
        return PreparedSequence(order, degree_normalize(adj), onehot, labels, vehicle_rows)
    from .baseline import baseline_features

    feats = baseline_features(seq, config.n_max)
    return PreparedSequence(order, None, onehot, labels, vehicle_rows, feats)


@dataclass
class Batch:
    """Padded arrays for a group of sequences.

    Outputs are produced for vehicle rows only: ``vehicle_index[b, k]`` is the
    canonical node index of the ``k``-th vehicle of sequence ``b`` (0 on
    padding, which is masked out of the loss).
    """

    size: int
    adj_norm: Optional[np.ndarray]  # (B, T, 4, n, n)
    onehot: Optional[np.ndarray]  # (B, n, 2)
    features: Optional[np.ndarray]  # (B, T, v, F)
    vehicle_index: np.ndarray  # (B, v)
    labels: np.ndarray  # (B * v,)
    mask: np.ndarray  # (B * v,) rows that carry a vehicle label
    weights: np.ndarray  # (B * v,) 1 / (B * vehicles in that sequence)
    rows: int


def make_batch(items: Sequence[PreparedSequence], config: ModelConfig) -> Batch:
    B = len(items)
    rows = max(max(p.n_vehicles for p in items), 1)
    vehicle_index = np.zeros((B, rows), dtype=np.int64)
    labels = np.full((B, rows), -1, dtype=np.int64)
    weights = np.zeros((B, rows))
    for b, p in enumerate(items):
        k = p.n_vehicles
        vehicle_index[b, :k] = p.vehicle_rows
        labels[b, :k] = p.labels[p.vehicle_rows]
        if k:
            weights[b, :k] = 1.0 / (B * k)
    adj = onehot = features = None
    if config.uses_graph:
        n = max(p.n for p in items)
        T = items[0].adj_norm.shape[0]
        adj = np.zeros((B, T, 4, n, n))
        onehot = np.zeros((B, n, 2))
        for b, p in enumerate(items):
            adj[b, :, :, : p.n, : p.n] = p.adj_norm
            onehot[b, : p.n] = p.onehot
    else:
        T, _, F = items[0].features.shape
        features = np.zeros((B, T, rows, F))
        for b, p in enumerate(items):
            features[b, :, : p.n_vehicles] = p.features
    mask = labels >= 0
    return Batch(B, adj, onehot, features, vehicle_index, labels.reshape(-1), mask.reshape(-1), weights.reshape(-1), rows)


def forward_batch(batch: Batch, config: ModelConfig, params: Mapping[str, Tensor]) -> Tensor:
    """Logits of shape ``(B, v, 6)`` for the vehicle rows of every sequence."""
    if config.uses_graph:
        x = spatial_encode(
            batch.adj_norm, batch.onehot[:, None], params, len(config.mrgcn_dims), rows=batch.vehicle_index
        )
    else:
        x = Tensor(batch.features)
    if config.uses_lstm:
        x = lstm(x, params)
    if config.uses_attention:
        x = multi_head_attention(x, params, config.heads)
    return classify(x, params)


def batch_loss(logits: Tensor, batch: Batch) -> Tensor:
    flat = logits.reshape(batch.size * batch.rows, N_CLASSES)
    return cross_entropy(flat, np.where(batch.mask, batch.labels, 0), batch.mask, batch.weights)


def forward(seq: SceneSequence, config: ModelConfig, params: Mapping[str, Tensor]) -> dict[int, np.ndarray]:
    """Per-vehicle logits ``{node_id: (6,) array}`` for a single sequence."""
    p = prepare(seq, config)
    logits = forward_batch(make_batch([p], config), config, params).data[0]
    ids = np.asarray(seq.node_ids)[p.order]
    return {int(ids[r]): logits[k] for k, r in enumerate(p.vehicle_rows)}


def sequence_loss(seq: SceneSequence, config: ModelConfig, params: Mapping[str, Tensor]) -> Tensor:
    batch = make_batch([prepare(seq, config)], config)
    return batch_loss(forward_batch(batch, config, params), batch)


def vehicle_logits(batch: Batch, logits: np.ndarray, items: Sequence[PreparedSequence], config: ModelConfig):
    """Split padded batch logits into one ``(n_vehicles, 6)`` block per sequence."""
    out = []
    for b, p in enumerate(items):
        out.append(logits[b, : p.n_vehicles])
    return out


def iter_batches(n: int, batch_size: int, order: Optional[np.ndarray] = None):
    order = np.arange(n) if order is None else order
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def n_batches(n: int, batch_size: int) -> int:
    return math.ceil(n / batch_size)
