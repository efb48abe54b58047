import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from helpers import quadrant_oracle, random_sequence
from maneuver_graph.scene_graph import (
    CLASSES,
    DatasetFormatError,
    NodeType,
    Relation,
    SceneSequence,
    SequenceValidationError,
    build_scene_graph,
    degree_normalize,
    deserialize,
    landmark_dropout,
    quadrant_relation,
    read_sequences,
    serialize,
    validate_sequence,
    write_sequences,
)

positions_strategy = st.integers(2, 12).flatmap(
    lambda n: arrays(np.float64, (n, 2), elements=st.floats(-50, 50, allow_nan=False))
)


def test_class_encoding():
    assert CLASSES == ("MVA", "MTU", "PRK", "LCL", "LCR", "OVT")
    assert len(NodeType) == 2


@pytest.mark.parametrize(
    "obj, expected",
    [((1, 1), Relation.TOP_RIGHT), ((-2, -3), Relation.BOTTOM_LEFT), ((0, 5), Relation.TOP_RIGHT),
     ((-1, 0), Relation.TOP_LEFT), ((0, -1), Relation.BOTTOM_RIGHT)],
)
def test_quadrant_relation(obj, expected):
    assert quadrant_relation((0, 0), obj) == expected


def test_single_node_graph():
    g = build_scene_graph([[0.0, 0.0]], [NodeType.VEHICLE])
    assert g.adjacency.shape == (4, 1, 1)
    assert not g.adjacency.any()


def test_two_node_graph():
    g = build_scene_graph([[0.0, 0.0], [1.0, 2.0]], [NodeType.VEHICLE, NodeType.LANDMARK])
    expected = np.zeros((4, 2, 2), dtype=np.uint8)
    expected[Relation.TOP_RIGHT, 0, 1] = 1
    expected[Relation.BOTTOM_LEFT, 1, 0] = 1
    np.testing.assert_array_equal(g.adjacency, expected)


def test_non_finite_position_rejected():
    with pytest.raises(ValueError):
        build_scene_graph([[0.0, np.nan], [1.0, 1.0]], [0, 0])


def test_matches_brute_force_oracle_on_1000_configurations():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(2, 21))
        pos = rng.uniform(-30, 30, size=(n, 2))
        if rng.random() < 0.3:  # exercise the tie-break with shared coordinates
            pos[rng.integers(0, n, size=n // 2), 0] = pos[0, 0]
            pos = np.round(pos)
        g = build_scene_graph(pos, np.zeros(n, dtype=int))
        oracle = quadrant_oracle(pos.tolist())
        for r in Relation:
            np.testing.assert_array_equal(g.adjacency[r], oracle[r.key])
        np.testing.assert_array_equal(g.adjacency.sum(axis=0), 1 - np.eye(n, dtype=int))


@settings(max_examples=100, deadline=None)
@given(positions_strategy)
def test_partition_property(pos):
    n = len(pos)
    A = build_scene_graph(pos, np.zeros(n, dtype=int)).adjacency
    np.testing.assert_array_equal(A.sum(axis=0), 1 - np.eye(n, dtype=int))
    for r in range(4):
        assert not np.diag(A[r]).any()


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 12).flatmap(lambda n: arrays(np.float64, (n, 2), elements=st.integers(-1000, 1000).map(lambda v: v / 8))))
def test_quadrant_antisymmetry(pos):
    # dyadic coordinates so negated deltas are exact; duplicates excluded
    pos = np.unique(pos, axis=0)
    A = build_scene_graph(pos, np.zeros(len(pos), dtype=int)).adjacency
    strict = np.all(pos[:, None] != pos[None], axis=-1)
    np.testing.assert_array_equal((A[Relation.TOP_RIGHT] & strict), (A[Relation.BOTTOM_LEFT].T & strict))
    np.testing.assert_array_equal((A[Relation.TOP_LEFT] & strict), (A[Relation.BOTTOM_RIGHT].T & strict))


@settings(max_examples=100, deadline=None)
@given(positions_strategy, st.integers(-64, 64), st.integers(-64, 64))
def test_translation_invariance(pos, dx, dy):
    pos = np.round(pos * 4) / 4  # exact under integer shifts
    n = len(pos)
    a = build_scene_graph(pos, np.zeros(n, dtype=int)).adjacency
    b = build_scene_graph(pos + [dx, dy], np.zeros(n, dtype=int)).adjacency
    np.testing.assert_array_equal(a, b)


def test_degree_normalize_examples():
    np.testing.assert_array_equal(degree_normalize([[0, 1], [0, 0]]), [[0, 1], [0, 0]])
    np.testing.assert_array_equal(degree_normalize([[0, 1, 1], [0, 0, 0], [1, 0, 0]])[0], [0, 0.5, 0.5])
    np.testing.assert_array_equal(degree_normalize(np.zeros((3, 3))), np.zeros((3, 3)))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 10).flatmap(lambda n: arrays(np.uint8, (n, n), elements=st.integers(0, 1))))
def test_degree_normalize_rows_sum_to_one_or_zero(A):
    sums = degree_normalize(A).sum(axis=1)
    assert set(np.round(sums, 12)).issubset({0.0, 1.0})
    np.testing.assert_array_equal(sums == 0, A.sum(axis=1) == 0)


def test_radius_option_limits_edges():
    pos = [[0.0, 0.0], [1.0, 1.0], [30.0, 30.0]]
    A = build_scene_graph(pos, [0, 0, 0], radius=5.0).adjacency
    assert A[:, 0, 1].sum() == 1 and A[:, 0, 2].sum() == 0


# --------------------------------------------------------- landmark dropout
def test_landmark_dropout_identity():
    seq = random_sequence(np.random.default_rng(1))
    assert landmark_dropout(seq, 1.0, seed=3) == seq


def test_landmark_dropout_keeps_floor_and_vehicles():
    seq = random_sequence(np.random.default_rng(2), n_vehicles=3, n_landmarks=8, T=5)
    half = landmark_dropout(seq, 0.5, seed=3)
    assert half.n_landmarks == 4
    assert half.vehicle_ids == seq.vehicle_ids
    assert half.labels == seq.labels
    # the same landmarks in every frame: positions are column slices of the original
    kept = [seq.node_ids.index(i) for i in half.node_ids]
    np.testing.assert_array_equal(half.positions, seq.positions[:, kept])
    assert landmark_dropout(seq, 0.5, seed=3) == half
    for f in (0.25, 0.6, 0.75):
        assert len(landmark_dropout(seq, f, seed=0).vehicle_ids) == 3


@pytest.mark.parametrize("fraction", [0.0, -0.1, 1.5])
def test_landmark_dropout_out_of_range(fraction):
    with pytest.raises(ValueError):
        landmark_dropout(random_sequence(np.random.default_rng(0)), fraction, seed=0)


# ------------------------------------------------------------------ file I/O
def test_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    seqs = [random_sequence(rng, T=10) for _ in range(5)]
    path = tmp_path / "d.jsonl"
    write_sequences(str(path), seqs)
    again = read_sequences(str(path))
    assert again == seqs
    for a, b in zip(seqs, again):
        assert a.positions.tobytes() == b.positions.tobytes()


def test_record_layout():
    seq = random_sequence(np.random.default_rng(5), n_vehicles=1, n_landmarks=1, T=2)
    rec = json.loads(serialize(seq))
    assert set(rec) == {"T", "node_ids", "node_types", "positions", "labels"}
    assert rec["node_types"] == ["vehicle", "landmark"]
    assert len(rec["positions"]) == 2 and len(rec["positions"][0][0]) == 2


def test_vehicle_free_record_rejected():
    rec = {"T": 1, "node_ids": [0], "node_types": ["landmark"], "positions": [[[0.0, 1.0]]], "labels": {}}
    with pytest.raises(DatasetFormatError, match="no vehicle"):
        deserialize(json.dumps(rec))


def test_truncated_file_reports_line(tmp_path):
    rng = np.random.default_rng(6)
    path = tmp_path / "d.jsonl"
    write_sequences(str(path), [random_sequence(rng) for _ in range(3)])
    text = path.read_text()
    path.write_text(text[: len(text) - 40])
    with pytest.raises(DatasetFormatError, match=r"d\.jsonl:3"):
        read_sequences(str(path))


def test_bad_field_diagnostic():
    rec = {"T": 2, "node_ids": [0], "node_types": ["vehicle"], "positions": [[[0, 0]]], "labels": {"0": 1}}
    with pytest.raises(DatasetFormatError, match="positions"):
        deserialize(json.dumps(rec))


def test_validator_catches_missing_label():
    seq = SceneSequence((0, 1), np.array([0, 0]), np.zeros((1, 2, 2)), {0: 1})
    with pytest.raises(SequenceValidationError):
        validate_sequence(seq)
