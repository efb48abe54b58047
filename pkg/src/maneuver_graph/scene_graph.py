"""Per-frame quadrant scene graphs and the sequences that carry them.

Positions are bird's-eye-view pairs ``(lateral, forward)`` in metres, in the
ego/camera frame.  For a subject ``i`` and object ``j`` the relation is the
quadrant of ``pos[j] - pos[i]``; a zero offset counts as Top / Right.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Optional, Sequence

import numpy as np

from ._seeding import rng_for

CLASSES = ("MVA", "MTU", "PRK", "LCL", "LCR", "OVT")
CLASS_INDEX = {name: i for i, name in enumerate(CLASSES)}
DEFAULT_T = 10


class NodeType(enum.IntEnum):
    VEHICLE = 0
    LANDMARK = 1


class Relation(enum.IntEnum):
    TOP_LEFT = 0
    TOP_RIGHT = 1
    BOTTOM_LEFT = 2
    BOTTOM_RIGHT = 3

    @property
    def key(self) -> str:
        return self.name.lower()


RELATIONS = tuple(Relation)


class DatasetFormatError(ValueError):
    """Malformed dataset record; message carries line and field."""


class SequenceValidationError(ValueError):
    pass


# ------------------------------------------------------------------ relations
def quadrant_relation(subject_pos, object_pos) -> Relation:
    d_lat = float(object_pos[0]) - float(subject_pos[0])
    d_fwd = float(object_pos[1]) - float(subject_pos[1])
    top = d_fwd >= 0.0
    right = d_lat >= 0.0
    if top:
        return Relation.TOP_RIGHT if right else Relation.TOP_LEFT
    return Relation.BOTTOM_RIGHT if right else Relation.BOTTOM_LEFT


def relation_codes(positions: np.ndarray) -> np.ndarray:
    """``n x n`` matrix of :class:`Relation` codes for every ordered pair.

    Works on a trailing ``(n, 2)`` block, so ``(T, n, 2)`` input gives
    ``(T, n, n)``.  The diagonal is meaningless and must be masked by callers.
    """
    positions = np.asarray(positions, dtype=np.float64)
    d = positions[..., None, :, :] - positions[..., :, None, :]
    bottom = d[..., 1] < 0.0
    left = d[..., 0] < 0.0
    # TOP_LEFT=0, TOP_RIGHT=1, BOTTOM_LEFT=2, BOTTOM_RIGHT=3
    return (2 * bottom + (~left)).astype(np.int8)


def adjacency_tensor(positions: np.ndarray, radius: Optional[float] = None) -> np.ndarray:
    """Binary adjacency stacked as ``(..., 4, n, n)`` in :data:`RELATIONS` order."""
    positions = np.asarray(positions, dtype=np.float64)
    codes = relation_codes(positions)
    n = positions.shape[-2]
    off_diag = ~np.eye(n, dtype=bool)
    if radius is not None:
        d = positions[..., None, :, :] - positions[..., :, None, :]
        off_diag = off_diag & (np.hypot(d[..., 0], d[..., 1]) <= radius)
    rel = np.arange(4, dtype=np.int8).reshape((4,) + (1,) * 2)
    adj = (codes[..., None, :, :] == rel) & off_diag[..., None, :, :]
    return adj.astype(np.uint8)


def degree_normalize(A) -> np.ndarray:
    """Row-normalise ``A`` by out-degree (``D^-1 A``); empty rows stay zero."""
    A = np.asarray(A, dtype=np.float64)
    deg = A.sum(axis=-1, keepdims=True)
    return np.divide(A, deg, out=np.zeros_like(A), where=deg > 0)


@dataclass(frozen=True)
class SceneGraph:
    node_ids: tuple
    node_types: np.ndarray
    adjacency: np.ndarray  # (4, n, n) uint8

    @property
    def n(self) -> int:
        return len(self.node_ids)

    def relation_matrix(self, relation: Relation) -> np.ndarray:
        return self.adjacency[int(relation)]

    def as_dict(self) -> dict:
        return {r: self.adjacency[int(r)] for r in RELATIONS}

    def normalized(self) -> np.ndarray:
        return degree_normalize(self.adjacency)


def build_scene_graph(positions, node_types, node_ids=None, radius: Optional[float] = None) -> SceneGraph:
    positions = np.asarray(positions, dtype=np.float64)
    if positions.ndim != 2 or positions.shape[1] != 2:
        raise ValueError(f"positions must be (n, 2), got {positions.shape}")
    n = positions.shape[0]
    if n < 1:
        raise ValueError("a scene graph needs at least one node")
    if not np.isfinite(positions).all():
        raise ValueError("non-finite node position")
    node_types = np.asarray(node_types, dtype=np.int8)
    if node_types.shape != (n,):
        raise ValueError("node_types length must equal node count")
    ids = tuple(range(n)) if node_ids is None else tuple(int(i) for i in node_ids)
    return SceneGraph(ids, node_types, adjacency_tensor(positions, radius))


# ------------------------------------------------------------------ sequences
@dataclass(frozen=True, eq=False)
class SceneSequence:
    """``T`` frames over a fixed node set with per-vehicle behaviour labels."""

    node_ids: tuple
    node_types: np.ndarray
    positions: np.ndarray  # (T, n, 2)
    labels: Mapping[int, int]
    _adjacency: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "node_ids", tuple(int(i) for i in self.node_ids))
        object.__setattr__(self, "node_types", np.asarray(self.node_types, dtype=np.int8))
        object.__setattr__(self, "positions", np.asarray(self.positions, dtype=np.float64))
        object.__setattr__(self, "labels", {int(k): int(v) for k, v in dict(self.labels).items()})

    @property
    def T(self) -> int:
        return self.positions.shape[0]

    @property
    def n(self) -> int:
        return len(self.node_ids)

    @property
    def vehicle_ids(self) -> list[int]:
        return [i for i, t in zip(self.node_ids, self.node_types) if t == NodeType.VEHICLE]

    @property
    def n_landmarks(self) -> int:
        return int((self.node_types == NodeType.LANDMARK).sum())

    def adjacency(self) -> np.ndarray:
        """Binary adjacency for all frames, shape ``(T, 4, n, n)``."""
        if self._adjacency is None:
            object.__setattr__(self, "_adjacency", adjacency_tensor(self.positions))
        return self._adjacency

    @property
    def frames(self) -> list[SceneGraph]:
        adj = self.adjacency()
        return [SceneGraph(self.node_ids, self.node_types, adj[t]) for t in range(self.T)]

    def label_vector(self) -> np.ndarray:
        """Class index per node; ``-1`` on landmarks."""
        return np.array([self.labels.get(i, -1) for i in self.node_ids], dtype=np.int64)

    def subset(self, keep: Sequence[int]) -> "SceneSequence":
        """Sequence restricted to node positions ``keep`` (indices, not ids)."""
        keep = np.asarray(keep, dtype=np.int64)
        ids = tuple(self.node_ids[k] for k in keep)
        labels = {i: c for i, c in self.labels.items() if i in set(ids)}
        return SceneSequence(ids, self.node_types[keep], self.positions[:, keep], labels)

    def permuted(self, perm: Sequence[int]) -> "SceneSequence":
        return self.subset(perm)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.asarray(self.node_ids, dtype=np.int64).tobytes())
        h.update(self.node_types.tobytes())
        h.update(np.ascontiguousarray(self.positions).tobytes())
        return h.hexdigest()[:16]

    def __eq__(self, other) -> bool:
        if not isinstance(other, SceneSequence):
            return NotImplemented
        return (
            self.node_ids == other.node_ids
            and np.array_equal(self.node_types, other.node_types)
            and self.positions.shape == other.positions.shape
            and np.array_equal(self.positions, other.positions)
            and dict(self.labels) == dict(other.labels)
        )

    __hash__ = None


def validate_sequence(seq: SceneSequence) -> None:
    """Raise :class:`SequenceValidationError` unless every invariant holds."""
    n = seq.n
    if seq.positions.ndim != 3 or seq.positions.shape[1:] != (n, 2):
        raise SequenceValidationError(f"positions must be (T, {n}, 2), got {seq.positions.shape}")
    if seq.T < 1:
        raise SequenceValidationError("sequence has no frames")
    if len(set(seq.node_ids)) != n:
        raise SequenceValidationError("node_ids are not unique")
    if seq.node_types.shape != (n,) or not np.isin(seq.node_types, (0, 1)).all():
        raise SequenceValidationError("node_types must be vehicle/landmark for every node")
    if not np.isfinite(seq.positions).all():
        raise SequenceValidationError("non-finite position")
    vehicles = set(seq.vehicle_ids)
    if not vehicles:
        raise SequenceValidationError("sequence has no vehicle nodes")
    labelled = set(seq.labels)
    if labelled != vehicles:
        extra = sorted(labelled - vehicles)
        missing = sorted(vehicles - labelled)
        raise SequenceValidationError(f"labels must cover exactly the vehicles (missing={missing}, extra={extra})")
    bad = [c for c in seq.labels.values() if not 0 <= c < len(CLASSES)]
    if bad:
        raise SequenceValidationError(f"class index out of range: {bad}")


def landmark_dropout(seq: SceneSequence, keep_fraction: float, seed: int) -> SceneSequence:
    """Keep ``floor(keep_fraction * n_landmarks)`` landmarks, chosen once per sequence."""
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError(f"keep_fraction must lie in (0, 1], got {keep_fraction}")
    if keep_fraction == 1.0:
        return seq
    landmark_idx = np.flatnonzero(seq.node_types == NodeType.LANDMARK)
    n_keep = int(math.floor(keep_fraction * landmark_idx.size + 1e-9))
    rng = rng_for(seed, "landmark-dropout", seq.fingerprint())
    kept = rng.choice(landmark_idx, size=n_keep, replace=False) if n_keep else np.array([], dtype=np.int64)
    keep = np.sort(np.concatenate([np.flatnonzero(seq.node_types == NodeType.VEHICLE), kept]))
    return seq.subset(keep)


# ------------------------------------------------------------------- file I/O
def to_record(seq: SceneSequence) -> dict:
    return {
        "T": seq.T,
        "node_ids": list(seq.node_ids),
        "node_types": [NodeType(t).name.lower() for t in seq.node_types],
        "positions": seq.positions.tolist(),
        "labels": {str(k): int(v) for k, v in sorted(seq.labels.items())},
    }


def _field_error(where: str, name: str, msg: str) -> DatasetFormatError:
    return DatasetFormatError(f"{where}: field {name!r}: {msg}")


def from_record(record: Mapping, where: str = "record") -> SceneSequence:
    if not isinstance(record, Mapping):
        raise DatasetFormatError(f"{where}: expected a JSON object")
    for key in ("T", "node_ids", "node_types", "positions", "labels"):
        if key not in record:
            raise _field_error(where, key, "missing")
    T = record["T"]
    if not isinstance(T, int) or T < 1:
        raise _field_error(where, "T", f"must be a positive integer, got {T!r}")
    ids = record["node_ids"]
    if not isinstance(ids, list) or not all(isinstance(i, int) for i in ids):
        raise _field_error(where, "node_ids", "must be a list of integers")
    try:
        types = [NodeType[str(t).upper()] for t in record["node_types"]]
    except KeyError as exc:
        raise _field_error(where, "node_types", f"unknown node type {exc}") from exc
    if len(types) != len(ids):
        raise _field_error(where, "node_types", f"length {len(types)} != {len(ids)} node_ids")
    try:
        pos = np.asarray(record["positions"], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise _field_error(where, "positions", f"not a numeric T x n x 2 array ({exc})") from exc
    if pos.shape != (T, len(ids), 2):
        raise _field_error(where, "positions", f"shape {pos.shape} != {(T, len(ids), 2)}")
    raw_labels = record["labels"]
    if not isinstance(raw_labels, Mapping):
        raise _field_error(where, "labels", "must be an object {vehicle_id: class}")
    try:
        labels = {int(k): int(v) for k, v in raw_labels.items()}
    except (TypeError, ValueError) as exc:
        raise _field_error(where, "labels", f"keys and values must be integers ({exc})") from exc
    seq = SceneSequence(tuple(ids), np.array(types, dtype=np.int8), pos, labels)
    try:
        validate_sequence(seq)
    except SequenceValidationError as exc:
        raise DatasetFormatError(f"{where}: {exc}") from exc
    return seq


def serialize(seq: SceneSequence) -> str:
    return json.dumps(to_record(seq), separators=(",", ":"))


def deserialize(line: str, where: str = "record") -> SceneSequence:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"{where}: invalid JSON ({exc.msg} at column {exc.colno})") from exc
    return from_record(record, where)


def write_sequences(path: str, sequences: Iterable[SceneSequence]) -> int:
    count = 0
    with open(path, "w") as fh:
        for seq in sequences:
            fh.write(serialize(seq))
            fh.write("\n")
            count += 1
    return count


def iter_sequences(path: str) -> Iterator[SceneSequence]:
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            yield deserialize(line, where=f"{path}:{lineno}")


def read_sequences(path: str) -> list[SceneSequence]:
    return list(iter_sequences(path))
