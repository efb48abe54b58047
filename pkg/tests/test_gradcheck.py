import numpy as np
import pytest

from maneuver_graph import gradcheck as gc
from maneuver_graph.autodiff import Tensor
from maneuver_graph.model import VARIANTS, ModelConfig
from maneuver_graph.model import layers
from maneuver_graph.scene_graph import NodeType, SceneSequence


@pytest.mark.parametrize("variant", VARIANTS)
def test_variant_passes(variant):
    (res,) = gc.run_all(seed=0, variants=[variant])
    assert res.passed, res.to_text()
    assert len(res.per_tensor) > 0
    assert res.seconds < 30.0


def test_toy_has_four_nodes_and_three_frames():
    seq = gc.toy_sequence(0)
    assert seq.n == 4 and seq.T == 3 and len(seq.vehicle_ids) == 3


def test_three_node_toy_passes():
    pos = np.array([[[0.0, 0.0], [2.0, 5.0], [-3.0, 4.0]]])
    pos = np.concatenate([pos + t * np.array([[0.0, 1.0], [0.5, 1.5], [0.0, 0.0]]) for t in range(3)])
    seq = SceneSequence((0, 1, 2), [NodeType.VEHICLE, NodeType.VEHICLE, NodeType.LANDMARK], pos, {0: 2, 1: 4})
    res = gc.gradcheck(ModelConfig(variant="G+L+MA", T=3), seed=1, sequence=seq)
    assert res.passed, res.to_text()


def test_relative_error_floor():
    assert gc.relative_error(np.array([1e-12]), np.array([0.0]))[0] == pytest.approx(1e-6)
    assert gc.relative_error(np.array([2.0]), np.array([1.0]))[0] == 0.5


def test_corrupted_backward_is_caught(monkeypatch):
    # a tanh whose backward drops the derivative factor must fail the check
    def bad_tanh(x):
        out = np.tanh(x.data)
        return Tensor._from_op(out, (x,), lambda g: (g,), "tanh")

    monkeypatch.setattr(layers, "tanh", bad_tanh)
    (res,) = gc.run_all(seed=0, variants=["L"])
    assert not res.passed
    assert res.per_tensor["lstm.W_i"] > gc.TOLERANCE
