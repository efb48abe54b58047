"""Analytic vs. central finite-difference gradients on a tiny sequence."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ._seeding import rng_for
from .autodiff import Tensor, backward, current_tape, no_grad
from .model import ModelConfig, init_params, sequence_loss
from .scene_graph import NodeType, SceneSequence

EPS = 1e-5
TOLERANCE = 1e-4
SAMPLES = 30
# Gradients below this size are compared in absolute rather than relative
# terms; central differences carry ~1e-11 round-off at EPS = 1e-5.
REL_FLOOR = 1e-6


def toy_sequence(seed: int = 0, T: int = 3) -> SceneSequence:
    """Three moving vehicles and one landmark, spread over all quadrants."""
    rng = rng_for(seed, "gradcheck-toy")
    start = np.array([[0.0, 0.0], [3.5, 8.0], [-3.5, -6.0], [5.0, 12.0]])
    start = start + rng.normal(0.0, 0.5, size=start.shape)
    velocity = np.array([[0.0, 1.0], [0.4, 2.0], [0.0, -1.5], [0.0, 0.0]])
    positions = np.stack([start + t * velocity for t in range(T)])
    types = [NodeType.VEHICLE, NodeType.VEHICLE, NodeType.VEHICLE, NodeType.LANDMARK]
    labels = {0: 0, 1: 3, 2: 1}
    return SceneSequence((0, 1, 2, 3), np.array(types), positions, labels)


def relative_error(analytic, numeric, floor: float = REL_FLOOR):
    a, n = np.abs(analytic), np.abs(numeric)
    return np.abs(analytic - numeric) / np.maximum(np.maximum(a, n), floor)


@dataclass
class GradcheckResult:
    variant: str
    per_tensor: dict[str, float] = field(default_factory=dict)
    seconds: float = 0.0

    @property
    def max_error(self) -> float:
        return max(self.per_tensor.values()) if self.per_tensor else 0.0

    @property
    def passed(self) -> bool:
        return self.max_error < TOLERANCE

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "passed": self.passed,
            "max_relative_error": self.max_error,
            "tolerance": TOLERANCE,
            "per_tensor": dict(self.per_tensor),
        }

    def to_text(self) -> str:
        width = max(len(k) for k in self.per_tensor) if self.per_tensor else 8
        lines = [f"{k:<{width}}  {v:.3e}" for k, v in self.per_tensor.items()]
        verdict = "PASS" if self.passed else "FAIL"
        lines.append(f"{self.variant}: {verdict} max rel. err. {self.max_error:.3e} ({self.seconds:.1f}s)")
        return "\n".join(lines)


def gradcheck(
    config: ModelConfig, seed: int = 0, samples: int = SAMPLES, eps: float = EPS, sequence=None
) -> GradcheckResult:
    """Compare tape gradients with central differences on ``samples``
    coordinates of every parameter tensor (all of them if it is smaller).

    ``sequence`` defaults to :func:`toy_sequence` with ``config.T`` frames.
    """
    start = time.perf_counter()
    seq = toy_sequence(seed, config.T) if sequence is None else sequence
    if not config.uses_graph and not config.n_max:
        config = config.with_(n_max=seq.n)
    params = init_params(config, seed)
    current_tape().reset()
    loss = sequence_loss(seq, config, params)
    backward(loss)
    analytic = {k: v.grad for k, v in params.items()}

    def loss_at(name, flat_index, value):
        data = params[name].data.copy()
        data.reshape(-1)[flat_index] = value
        trial = dict(params)
        trial[name] = Tensor(data)
        with no_grad():
            return sequence_loss(seq, config, trial).item()

    result = GradcheckResult(config.variant)
    for name, tensor in params.items():
        rng = rng_for(seed, "gradcheck-coords", name)
        size = tensor.size
        coords = rng.choice(size, size=min(samples, size), replace=False)
        flat = tensor.data.reshape(-1)
        numeric = np.empty(len(coords))
        for j, c in enumerate(coords):
            x = flat[c]
            numeric[j] = (loss_at(name, c, x + eps) - loss_at(name, c, x - eps)) / (2 * eps)
        errs = relative_error(analytic[name].reshape(-1)[coords], numeric)
        result.per_tensor[name] = float(errs.max())
    result.seconds = time.perf_counter() - start
    return result


def run_all(seed: int = 0, variants=None, **overrides) -> list[GradcheckResult]:
    from .model import VARIANTS

    return [gradcheck(ModelConfig(variant=v, T=3, seed=seed, **overrides), seed) for v in (variants or VARIANTS)]


__all__ = ["EPS", "GradcheckResult", "REL_FLOOR", "SAMPLES", "TOLERANCE", "gradcheck", "run_all", "toy_sequence"]
