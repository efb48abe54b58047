"""scikit-learn style estimator around the maneuver network."""

from __future__ import annotations

import logging
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .._seeding import rng_for
from .._validation import check_sequences
from ..autodiff import (
    NonFiniteError,
    OptimizerState,
    Tensor,
    backward,
    load_checkpoint,
    no_grad,
    optimizer_step,
    save_checkpoint,
)
from ..scene_graph import SceneSequence
from .config import N_CLASSES, ModelConfig
from .network import batch_loss, forward_batch, iter_batches, make_batch, prepare, vehicle_logits
from .params import check_params, init_params

logger = logging.getLogger(__name__)

EVAL_BATCH = 32


class TrainingDivergedError(RuntimeError):
    """Loss or parameters became non-finite during training."""


def vehicle_targets(X: Sequence[SceneSequence]) -> np.ndarray:
    """Ground-truth classes in prediction order (sequence, then ascending id)."""
    return np.concatenate(
        [np.array([s.labels[i] for i in sorted(s.vehicle_ids)], dtype=np.int64) for s in check_sequences(X)]
    )


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


class ManeuverClassifier(ClassifierMixin, BaseEstimator):
    """Vehicle maneuver classifier over scene-graph sequences.

    ``X`` is a list of :class:`SceneSequence`; labels travel inside the
    sequences, so ``y`` is accepted for API compatibility and ignored.
    Predictions are flat arrays with one row per vehicle, ordered by sequence
    and then by ascending node id (see :func:`vehicle_targets`).

    Parameters
    ----------
    variant : {"G+L+MA", "G+L+SA", "G+L", "G+SA", "L", "L+MA"}
    embed_dim, mrgcn_dims : object-type embedding width and MR-GCN widths.
    n_heads, d_k, d_v : attention heads and per-head widths (``None`` keeps
        ``n_heads * d_v`` equal to the input width).
    n_max : node budget of the positional baselines (``None``: from ``fit``).
    epochs, batch_size, learning_rate, patience : training schedule; early
        stopping only applies when validation sequences are given.
    random_state : master seed for initialisation and shuffling.
    """

    def __init__(
        self,
        variant: str = "G+L+MA",
        embed_dim: int = 128,
        mrgcn_dims=(128, 32),
        n_heads: int = 4,
        d_k: Optional[int] = None,
        d_v: Optional[int] = None,
        n_max: Optional[int] = None,
        epochs: int = 60,
        batch_size: int = 8,
        learning_rate: float = 1e-3,
        patience: int = 10,
        random_state: int = 0,
        verbose: bool = False,
    ):
        self.variant = variant
        self.embed_dim = embed_dim
        self.mrgcn_dims = mrgcn_dims
        self.n_heads = n_heads
        self.d_k = d_k
        self.d_v = d_v
        self.n_max = n_max
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.patience = patience
        self.random_state = random_state
        self.verbose = verbose

    # ------------------------------------------------------------ helpers
    def _make_config(self, X) -> ModelConfig:
        n_max = self.n_max
        if not self.variant.startswith("G") and not n_max:
            n_max = max(2, max(s.n for s in X))
        return ModelConfig(
            variant=self.variant,
            embed_dim=self.embed_dim,
            mrgcn_dims=tuple(self.mrgcn_dims),
            n_heads=self.n_heads,
            d_k=self.d_k,
            d_v=self.d_v,
            n_max=n_max,
            seed=self.random_state,
        )

    def _logits(self, prepared, params) -> list[np.ndarray]:
        out = []
        with no_grad():
            for idx in iter_batches(len(prepared), EVAL_BATCH):
                items = [prepared[i] for i in idx]
                batch = make_batch(items, self.config_)
                logits = forward_batch(batch, self.config_, params).data
                out.extend(vehicle_logits(batch, logits, items, self.config_))
        return out

    def _mean_loss(self, prepared, params) -> float:
        total = 0.0
        with no_grad():
            for idx in iter_batches(len(prepared), EVAL_BATCH):
                items = [prepared[i] for i in idx]
                batch = make_batch(items, self.config_)
                total += batch_loss(forward_batch(batch, self.config_, params), batch).item() * len(items)
        return total / len(prepared)

    def _accuracy(self, prepared, params) -> float:
        logits = np.concatenate(self._logits(prepared, params))
        truth = np.concatenate([p.labels[p.vehicle_rows] for p in prepared])
        return float((logits.argmax(axis=1) == truth).mean())

    # ---------------------------------------------------------------- fit
    def fit(self, X, y=None, X_val=None):
        X = check_sequences(X, validate=True)
        self.config_ = self._make_config(X)
        self.classes_ = np.arange(N_CLASSES)
        params = init_params(self.config_)
        train = [prepare(s, self.config_) for s in X]
        val = [prepare(s, self.config_) for s in check_sequences(X_val, validate=True)] if X_val else None
        state = OptimizerState(learning_rate=self.learning_rate)
        self.history_ = {"initial_loss": self._mean_loss(train, params), "loss": [], "val_accuracy": []}
        best_params, best_acc, best_epoch = params, -1.0, 0
        if val is not None and self.epochs == 0:
            best_acc = self._accuracy(val, params)
        for epoch in range(1, int(self.epochs) + 1):
            order = rng_for(self.random_state, "epoch-order", epoch).permutation(len(train))
            losses = []
            for b, idx in enumerate(iter_batches(len(train), self.batch_size, order)):
                items = [train[i] for i in idx]
                batch = make_batch(items, self.config_)
                try:
                    loss = batch_loss(forward_batch(batch, self.config_, params), batch)
                    backward(loss)
                    params = optimizer_step(params, state)
                except NonFiniteError as exc:
                    raise TrainingDivergedError(f"epoch {epoch}, batch {b}: {exc}") from exc
                losses.append(loss.item() * len(items))
            epoch_loss = float(np.sum(losses) / len(train))
            self.history_["loss"].append(epoch_loss)
            if val is not None:
                acc = self._accuracy(val, params)
                self.history_["val_accuracy"].append(acc)
                if acc > best_acc:
                    best_params, best_acc, best_epoch = params, acc, epoch
                if self.verbose:
                    logger.info("epoch %d loss %.4f val_acc %.4f", epoch, epoch_loss, acc)
                if epoch - best_epoch >= self.patience:
                    break
            else:
                best_params, best_epoch = params, epoch
                if self.verbose:
                    logger.info("epoch %d loss %.4f", epoch, epoch_loss)
        self.params_ = {k: Tensor(v.data, requires_grad=True) for k, v in best_params.items()}
        self.best_epoch_ = best_epoch
        self.best_val_accuracy_ = best_acc if val is not None else None
        self.n_epochs_run_ = len(self.history_["loss"])
        return self

    # ------------------------------------------------------------ predict
    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        X = check_sequences(X)
        prepared = [prepare(s, self.config_) for s in X]
        blocks = self._logits(prepared, self.params_)
        return np.concatenate(blocks) if blocks else np.zeros((0, N_CLASSES))

    def predict_proba(self, X) -> np.ndarray:
        return _softmax(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        return self.decision_function(X).argmax(axis=1)

    def score(self, X, y=None, sample_weight=None) -> float:
        truth = vehicle_targets(X) if y is None else np.asarray(y)
        return float((self.predict(X) == truth).mean())

    # -------------------------------------------------------- persistence
    def save(self, path: str) -> None:
        check_is_fitted(self, "params_")
        meta = {"estimator": self.get_params(), "model": self.config_.to_dict()}
        save_checkpoint(path, self.params_, meta)

    @classmethod
    def load(cls, path: str) -> "ManeuverClassifier":
        params, meta = load_checkpoint(path)
        est = cls(**meta["estimator"])
        est.config_ = ModelConfig.from_dict(meta["model"])
        check_params(params, est.config_)
        est.params_ = params
        est.classes_ = np.arange(N_CLASSES)
        return est
