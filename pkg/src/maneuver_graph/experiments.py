"""Training/evaluation runs and the multi-run harnesses built on them.

Runs are memoised in-process by (data fingerprint, variant, seed, epochs,
landmark fraction), so harnesses that share a configuration (the 100%
landmark column and the G+L+MA ablation row, say) train it once.  Distinct
runs may be spread over worker processes; ``MANEUVER_GRAPH_THREADS`` caps the
pool and defaults to 1 (sequential).
"""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from ._seeding import derive_seed
from .metrics import TRANSFER_CLASSES, MetricsReport, loss_samples, parse_classes, table_text
from .model import VARIANTS, ManeuverClassifier, vehicle_targets
from .scene_graph import CLASSES, SceneSequence, landmark_dropout
from .traffic_sim import TRANSFER_MIX, Dataset, WorldConfig, generate_sequences, preset

THREADS_ENV = "MANEUVER_GRAPH_THREADS"
LANDMARK_FRACTIONS = (0.5, 0.75, 1.0)
LANDMARK_CLASSES = ("LCL", "LCR", "MVA", "MTU")
TRANSFER_EVAL_SEQUENCES = 120


def max_workers() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if value < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return value


@dataclass
class Splits:
    train: list[SceneSequence]
    val: list[SceneSequence]
    test: list[SceneSequence]

    @classmethod
    def from_dataset(cls, dataset: Dataset) -> "Splits":
        return cls(dataset.split("train"), dataset.split("val"), dataset.split("test"))

    def map(self, fn) -> "Splits":
        return Splits([fn(s) for s in self.train], [fn(s) for s in self.val], [fn(s) for s in self.test])

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for part in (self.train, self.val, self.test):
            h.update(b"|")
            for s in part:
                h.update(s.fingerprint().encode())
        return h.hexdigest()[:16]


def drop_landmarks(splits: Splits, fraction: float, seed: int) -> Splits:
    """Apply the same landmark dropout stream to train, validation and test."""
    if fraction == 1.0:
        return splits
    sub = derive_seed(seed, "landmark-ablation", fraction)
    return splits.map(lambda s: landmark_dropout(s, fraction, sub))


def fit_model(splits: Splits, variant: str = "G+L+MA", seed: int = 0, epochs: int = 60, **est_params) -> ManeuverClassifier:
    clf = ManeuverClassifier(variant=variant, epochs=epochs, random_state=seed, **est_params)
    return clf.fit(splits.train, X_val=splits.val or None)


def evaluate(clf: ManeuverClassifier, X: Sequence[SceneSequence], classes=None, **extra) -> MetricsReport:
    curve = loss_samples(getattr(clf, "history_", {}).get("loss", []))
    return MetricsReport.from_logits(clf.decision_function(X), vehicle_targets(X), parse_classes(classes), curve, **extra)


@dataclass(frozen=True)
class RunSpec:
    variant: str = "G+L+MA"
    seed: int = 0
    epochs: int = 60
    landmark_fraction: float = 1.0


@dataclass
class RunResult:
    spec: RunSpec
    report: MetricsReport
    best_epoch: int
    best_val_accuracy: Optional[float]
    classifier: Optional[ManeuverClassifier] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "variant": self.spec.variant,
            "seed": self.spec.seed,
            "epochs": self.spec.epochs,
            "landmark_fraction": self.spec.landmark_fraction,
            "best_epoch": self.best_epoch,
            "best_val_accuracy": self.best_val_accuracy,
            "metrics": self.report.to_dict(),
        }


_RUN_CACHE: dict = {}


def clear_cache() -> None:
    _RUN_CACHE.clear()


def _execute(splits: Splits, spec: RunSpec) -> RunResult:
    data = drop_landmarks(splits, spec.landmark_fraction, spec.seed)
    clf = fit_model(data, spec.variant, spec.seed, spec.epochs)
    report = evaluate(clf, data.test)
    return RunResult(spec, report, clf.best_epoch_, clf.best_val_accuracy_, clf)


def _execute_remote(args):
    return _execute(*args)


def run_many(splits: Splits, specs: Sequence[RunSpec]) -> list[RunResult]:
    """Train/evaluate each spec (memoised); results in the order of ``specs``."""
    key_base = splits.fingerprint()
    todo = [s for s in dict.fromkeys(specs) if (key_base, s) not in _RUN_CACHE]
    workers = min(max_workers(), len(todo))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for result in pool.map(_execute_remote, [(splits, s) for s in todo]):
                _RUN_CACHE[(key_base, result.spec)] = result
    else:
        for spec in todo:
            _RUN_CACHE[(key_base, spec)] = _execute(splits, spec)
    return [_RUN_CACHE[(key_base, s)] for s in specs]


def run(splits: Splits, spec: RunSpec) -> RunResult:
    return run_many(splits, [spec])[0]


def _average(reports: Sequence[MetricsReport], classes) -> dict[str, Optional[float]]:
    out = {}
    for c in classes:
        vals = [r.per_class_accuracy.get(c) for r in reports]
        vals = [v for v in vals if v is not None]
        out[c] = float(np.mean(vals)) if vals else None
    return out


def _mean_of(row: Mapping[str, Optional[float]], classes) -> float:
    vals = [row[c] for c in classes if row.get(c) is not None]
    return float(np.mean(vals)) if vals else 0.0


@dataclass
class AblationTable:
    """Per-class accuracy averaged over seeds, one column per setting."""

    kind: str
    columns: dict[str, dict[str, Optional[float]]]
    runs: dict[str, list[dict]]
    seeds: list[int]
    classes: tuple[str, ...] = CLASSES

    def mean(self, column: str, classes=None) -> float:
        return _mean_of(self.columns[column], classes or self.classes)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "seeds": list(self.seeds),
            "classes": list(self.classes),
            "columns": self.columns,
            "mean_accuracy": {k: self.mean(k) for k in self.columns},
            "runs": self.runs,
        }

    def to_text(self) -> str:
        return table_text(self.columns, self.classes, title=f"{self.kind} (mean over seeds {self.seeds})")


def landmark_label(fraction: float) -> str:
    return "ours (full)" if fraction == 1.0 else f"ours ({round(100 * fraction)}%)"


def ablate_landmarks(splits: Splits, fractions=LANDMARK_FRACTIONS, seeds=(0, 1, 2), epochs: int = 60) -> AblationTable:
    fractions = sorted(float(f) for f in fractions)
    specs = [RunSpec("G+L+MA", s, epochs, f) for f in fractions for s in seeds]
    results = run_many(splits, specs)
    columns, runs = {}, {}
    for f in fractions:
        chosen = [r for r in results if r.spec.landmark_fraction == f]
        columns[landmark_label(f)] = _average([r.report for r in chosen], CLASSES)
        runs[landmark_label(f)] = [r.to_dict() for r in chosen]
    return AblationTable("landmark ablation", columns, runs, list(seeds))


def ablate_model(splits: Splits, variants=VARIANTS, seeds=(0, 1, 2), epochs: int = 60) -> AblationTable:
    unknown = [v for v in variants if v not in VARIANTS]
    if unknown:
        raise ValueError(f"unknown variant(s) {unknown}; expected some of {list(VARIANTS)}")
    specs = [RunSpec(v, s, epochs) for v in variants for s in seeds]
    results = run_many(splits, specs)
    columns, runs = {}, {}
    for v in variants:
        chosen = [r for r in results if r.spec.variant == v]
        columns[v] = _average([r.report for r in chosen], CLASSES)
        runs[v] = [r.to_dict() for r in chosen]
    return AblationTable("model ablation", columns, runs, list(seeds))


def transfer_eval_sets(names: Sequence[str], seed: int, n: int = TRANSFER_EVAL_SEQUENCES) -> dict[str, list[SceneSequence]]:
    """Held-out three-class sequences from each named preset (or config)."""
    out = {}
    for name in names:
        config = name if isinstance(name, WorldConfig) else preset(name)
        seqs, _ = generate_sequences(n, config, derive_seed(seed, "transfer-eval", config.distribution_id), TRANSFER_MIX)
        out[config.distribution_id] = seqs
    return out


@dataclass
class TransferTable:
    source: str
    columns: dict[str, dict[str, Optional[float]]]  # distribution -> {class: acc}
    retention: dict[str, float]
    runs: list[dict]
    seeds: list[int]
    classes: tuple[str, ...] = TRANSFER_CLASSES

    def mean(self, column: str) -> float:
        return _mean_of(self.columns[column], self.classes)

    def to_dict(self) -> dict:
        return {
            "kind": "transfer",
            "source": self.source,
            "seeds": list(self.seeds),
            "classes": list(self.classes),
            "columns": self.columns,
            "mean_accuracy": {k: self.mean(k) for k in self.columns},
            "retention": self.retention,
            "runs": self.runs,
        }

    def to_text(self) -> str:
        text = table_text(self.columns, self.classes, title=f"transfer from {self.source} (mean over seeds {self.seeds})")
        ret = "  ".join(f"{k} {100 * v:.1f}%" for k, v in self.retention.items())
        return f"{text}\nretention  {ret}"


def transfer(
    splits: Splits, eval_sets: Mapping[str, Sequence[SceneSequence]], seeds=(0, 1, 2), epochs: int = 60, source: str = "source"
) -> TransferTable:
    """Train on ``splits`` (all six classes); score the three shared classes
    in distribution (test split) and on every held-out set."""
    results = run_many(splits, [RunSpec("G+L+MA", s, epochs) for s in seeds])
    per_column: dict[str, list[MetricsReport]] = {source: []}
    runs = []
    for r in results:
        clf = r.classifier
        row = {"seed": r.spec.seed, source: evaluate(clf, splits.test, TRANSFER_CLASSES).to_dict()}
        per_column[source].append(MetricsReport.from_dict(row[source]))
        for name, X in eval_sets.items():
            rep = evaluate(clf, X, TRANSFER_CLASSES)
            per_column.setdefault(name, []).append(rep)
            row[name] = rep.to_dict()
        runs.append(row)
    columns = {k: _average(v, TRANSFER_CLASSES) for k, v in per_column.items()}
    base = _mean_of(columns[source], TRANSFER_CLASSES)
    retention = {k: (_mean_of(columns[k], TRANSFER_CLASSES) / base if base else 0.0) for k in eval_sets}
    return TransferTable(source, columns, retention, runs, list(seeds))


def default_splits(seed: int = 0, n: int = 600, config: Optional[WorldConfig] = None) -> Splits:
    """The default balanced dataset (apollo preset) split 80/10/10."""
    from .traffic_sim import split_indices

    config = config or preset("apollo")
    seqs, primaries = generate_sequences(n, config, seed)
    idx = split_indices(primaries, seed)
    return Splits(*[[seqs[i] for i in idx[k]] for k in ("train", "val", "test")])
