"""Input checks shared by the estimators, in the spirit of ``check_array``."""

from __future__ import annotations

from typing import Iterable

from .scene_graph import SceneSequence, validate_sequence


def check_sequences(X, *, validate: bool = False, allow_empty: bool = False) -> list[SceneSequence]:
    if isinstance(X, SceneSequence):
        raise TypeError("expected a list of SceneSequence objects, got a single sequence")
    if not isinstance(X, Iterable):
        raise TypeError(f"expected a list of SceneSequence objects, got {type(X).__name__}")
    X = list(X)
    if not X and not allow_empty:
        raise ValueError("found an empty list of sequences")
    for i, s in enumerate(X):
        if not isinstance(s, SceneSequence):
            raise TypeError(f"element {i} is {type(s).__name__}, not SceneSequence")
        if validate:
            validate_sequence(s)
    return X


def check_keep_fraction(value: float) -> float:
    value = float(value)
    if not 0.0 < value <= 1.0:
        raise ValueError(f"keep_fraction must lie in (0, 1], got {value}")
    return value
