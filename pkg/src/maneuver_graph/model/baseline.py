"""Positional feature vectors for the graph-free baselines."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ..scene_graph import NodeType, SceneSequence
from .._validation import check_sequences


def baseline_features(seq: SceneSequence, n_max: int) -> np.ndarray:
    """``(T, n_vehicles, (n_max - 1) * 4)`` distance/angle/type features.

    For each target vehicle (ascending id) and frame, every other node in
    ascending id order contributes ``[distance, atan2(d_fwd, d_lat),
    is_vehicle, is_landmark]``.  Slots beyond the scene are zero; nodes past
    ``n_max - 1`` others are dropped.
    """
    if n_max < 2:
        raise ValueError("n_max must be >= 2")
    order = np.argsort(np.asarray(seq.node_ids, dtype=np.int64), kind="stable")
    pos = seq.positions[:, order]
    types = seq.node_types[order]
    targets = np.flatnonzero(types == NodeType.VEHICLE)
    T, n, _ = pos.shape
    slots = n_max - 1
    out = np.zeros((T, targets.size, slots * 4))
    onehot = np.zeros((n, 2))
    onehot[np.arange(n), types] = 1.0
    for k, v in enumerate(targets):
        others = np.delete(np.arange(n), v)[:slots]
        if others.size == 0:
            continue
        delta = pos[:, others] - pos[:, v : v + 1]  # (T, m, 2)
        block = np.empty((T, others.size, 4))
        block[..., 0] = np.hypot(delta[..., 0], delta[..., 1])
        block[..., 1] = np.arctan2(delta[..., 1], delta[..., 0])
        block[..., 2:] = onehot[others]
        out[:, k, : others.size * 4] = block.reshape(T, -1)
    return out


class PositionalFeatures(TransformerMixin, BaseEstimator):
    """Turn scene sequences into padded per-vehicle feature tensors.

    Parameters
    ----------
    n_max : int or None
        Fixed node budget.  ``None`` learns it from the largest scene seen in
        :meth:`fit`.
    """

    def __init__(self, n_max: Optional[int] = None):
        self.n_max = n_max

    def fit(self, X: Sequence[SceneSequence], y=None):
        X = check_sequences(X)
        self.n_max_ = int(self.n_max) if self.n_max else max(2, max(s.n for s in X))
        self.n_features_out_ = (self.n_max_ - 1) * 4
        return self

    def transform(self, X: Sequence[SceneSequence]) -> list:
        check_is_fitted(self, "n_max_")
        X = check_sequences(X)
        return [baseline_features(s, self.n_max_) for s in X]
