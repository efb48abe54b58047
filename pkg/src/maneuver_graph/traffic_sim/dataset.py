"""Stratified synthetic datasets: JSON Lines records plus a JSON manifest."""

from __future__ import annotations

import json
import os
from typing import Mapping, Optional

import numpy as np

from .._seeding import derive_seed, rng_for
from ..scene_graph import CLASSES, SceneSequence, read_sequences, validate_sequence, write_sequences
from .config import WorldConfig
from .scenario import _normalize_mix, generate_scenario
from .simulate import simulate

DATASET_FILE = "dataset.jsonl"
MANIFEST_FILE = "manifest.json"
BALANCED = {c: 1.0 / len(CLASSES) for c in CLASSES}
TRANSFER_MIX = {"MVA": 1 / 3, "MTU": 1 / 3, "PRK": 1 / 3}


def class_counts(n: int, class_mix) -> dict[str, int]:
    """Largest-remainder apportionment of ``n`` sequences over the mix."""
    mix = _normalize_mix(class_mix)
    raw = mix * n
    counts = np.floor(raw).astype(int)
    remainder = raw - counts
    for i in np.argsort(-remainder, kind="stable")[: n - counts.sum()]:
        counts[i] += 1
    return {c: int(k) for c, k in zip(CLASSES, counts)}


def split_indices(primaries: list[str], seed: int, val_frac: float = 0.1, test_frac: float = 0.1) -> dict:
    """Stratified train/val/test split by primary class."""
    n = len(primaries)
    rng = rng_for(seed, "split")
    by_class = {c: [i for i, p in enumerate(primaries) if p == c] for c in CLASSES}
    queues = [list(rng.permutation(idx)) for idx in by_class.values() if idx]
    interleaved = []
    while any(queues):
        for q in queues:
            if q:
                interleaved.append(int(q.pop(0)))
    n_test = int(round(test_frac * n))
    n_val = int(round(val_frac * n))
    return {
        "test": sorted(interleaved[:n_test]),
        "val": sorted(interleaved[n_test : n_test + n_val]),
        "train": sorted(interleaved[n_test + n_val :]),
    }


def generate_sequences(n_sequences: int, config: WorldConfig, seed: int, class_mix=None):
    """Return ``(sequences, primary_classes)`` without touching the disk."""
    class_mix = BALANCED if class_mix is None else class_mix
    counts = class_counts(n_sequences, class_mix)
    primaries = [c for c in CLASSES for _ in range(counts[c])]
    primaries = [primaries[i] for i in rng_for(seed, "class-order").permutation(n_sequences)]
    sequences = []
    for i, primary in enumerate(primaries):
        scenario = generate_scenario(class_mix, config, derive_seed(seed, "sequence", i), primary=primary)
        seq = simulate(scenario)
        validate_sequence(seq)
        sequences.append(seq)
    return sequences, primaries


def generate_dataset(n_sequences: int, config: WorldConfig, seed: int, out_dir: str, class_mix=None) -> dict:
    """Write ``dataset.jsonl`` and ``manifest.json`` into ``out_dir``; return the manifest."""
    class_mix = BALANCED if class_mix is None else class_mix
    sequences, primaries = generate_sequences(n_sequences, config, seed, class_mix)
    os.makedirs(out_dir, exist_ok=True)
    write_sequences(os.path.join(out_dir, DATASET_FILE), sequences)
    mix = _normalize_mix(class_mix)
    manifest = {
        "format": "maneuver-graph-dataset",
        "version": 1,
        "seed": int(seed),
        "n_sequences": n_sequences,
        "distribution_id": config.distribution_id,
        "config_hash": config.digest(),
        "config": config.to_dict(),
        "class_mix": {c: float(w) for c, w in zip(CLASSES, mix)},
        "class_counts": class_counts(n_sequences, class_mix),
        "primary_classes": primaries,
        "splits": split_indices(primaries, seed),
        "dataset_file": DATASET_FILE,
    }
    with open(os.path.join(out_dir, MANIFEST_FILE), "w") as fh:
        json.dump(manifest, fh, indent=1)
    return manifest


class Dataset:
    """A generated dataset loaded back from disk."""

    def __init__(self, sequences: list[SceneSequence], manifest: Mapping):
        self.sequences = sequences
        self.manifest = dict(manifest)

    @classmethod
    def load(cls, path: str) -> "Dataset":
        directory = path if os.path.isdir(path) else os.path.dirname(os.path.abspath(path))
        data_path = os.path.join(directory, DATASET_FILE) if os.path.isdir(path) else path
        manifest_path = os.path.join(directory, MANIFEST_FILE)
        manifest: dict = {}
        if os.path.exists(manifest_path):
            with open(manifest_path) as fh:
                manifest = json.load(fh)
        sequences = read_sequences(data_path)
        expected = manifest.get("n_sequences")
        if expected is not None and expected != len(sequences):
            from ..scene_graph import DatasetFormatError

            raise DatasetFormatError(
                f"{data_path}: manifest lists {expected} sequences but the file holds {len(sequences)} (truncated?)"
            )
        if "splits" not in manifest:
            manifest["splits"] = {"train": list(range(len(sequences))), "val": [], "test": []}
        return cls(sequences, manifest)

    def split(self, name: str) -> list[SceneSequence]:
        if name == "all":
            return list(self.sequences)
        return [self.sequences[i] for i in self.manifest["splits"][name]]

    @property
    def config(self) -> Optional[WorldConfig]:
        blob = self.manifest.get("config")
        return WorldConfig.from_dict(blob) if blob else None
