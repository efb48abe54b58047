"""Confusion matrices, per-class recall and the versioned metric JSON."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .scene_graph import CLASS_INDEX, CLASSES

METRICS_SCHEMA = "maneuver-graph-metrics"
METRICS_VERSION = 1
TRANSFER_CLASSES = ("MVA", "MTU", "PRK")


def parse_classes(spec) -> tuple[str, ...]:
    """``"MVA,MTU,PRK"`` / ``["MVA", ...]`` / ``None`` (all) -> class names in canonical order."""
    if spec is None or spec == "" or spec == "all":
        return CLASSES
    names = spec.split(",") if isinstance(spec, str) else list(spec)
    names = [str(n).strip().upper() for n in names if str(n).strip()]
    unknown = sorted(set(names) - set(CLASSES))
    if unknown:
        raise ValueError(f"unknown class name(s) {unknown}; expected a subset of {list(CLASSES)}")
    if not names:
        raise ValueError("empty class subset")
    return tuple(c for c in CLASSES if c in names)


def restrict(logits: np.ndarray, truth: np.ndarray, classes: Sequence[str]):
    """Drop vehicles whose true class is outside ``classes`` and take the argmax
    over the subset's logits only.  Returns ``(truth, predictions)`` in full
    class indices."""
    idx = np.array([CLASS_INDEX[c] for c in classes], dtype=np.int64)
    logits = np.asarray(logits, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.int64)
    keep = np.isin(truth, idx)
    pred = idx[logits[keep][:, idx].argmax(axis=1)] if keep.any() else np.zeros(0, dtype=np.int64)
    return truth[keep], pred


def confusion(truth: np.ndarray, pred: np.ndarray, n_classes: int = len(CLASSES)) -> np.ndarray:
    mat = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(mat, (np.asarray(truth, dtype=np.int64), np.asarray(pred, dtype=np.int64)), 1)
    return mat


@dataclass
class MetricsReport:
    """Evaluation summary; rows of ``confusion`` are ground truth."""

    confusion: np.ndarray
    classes: tuple[str, ...] = CLASSES
    loss_curve: list[float] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_predictions(cls, truth, pred, classes=CLASSES, loss_curve=(), **extra) -> "MetricsReport":
        return cls(confusion(truth, pred), tuple(classes), [float(x) for x in loss_curve], dict(extra))

    @classmethod
    def from_logits(cls, logits, truth, classes=CLASSES, loss_curve=(), **extra) -> "MetricsReport":
        classes = parse_classes(classes)
        t, p = restrict(logits, truth, classes)
        return cls.from_predictions(t, p, classes, loss_curve, **extra)

    @property
    def row_totals(self) -> np.ndarray:
        return self.confusion.sum(axis=1)

    @property
    def per_class_accuracy(self) -> dict[str, Optional[float]]:
        """Recall per class in ``classes``; ``None`` when a class has no vehicles."""
        out = {}
        for c in self.classes:
            i = CLASS_INDEX[c]
            total = self.row_totals[i]
            out[c] = float(self.confusion[i, i] / total) if total else None
        return out

    @property
    def overall_accuracy(self) -> float:
        total = self.confusion.sum()
        return float(np.trace(self.confusion) / total) if total else 0.0

    def mean_accuracy(self, classes: Optional[Iterable[str]] = None) -> float:
        """Unweighted mean of per-class recall (classes without vehicles skipped)."""
        acc = self.per_class_accuracy
        names = self.classes if classes is None else tuple(classes)
        vals = [acc[c] for c in names if acc.get(c) is not None]
        return float(np.mean(vals)) if vals else 0.0

    @property
    def n_vehicles(self) -> int:
        return int(self.confusion.sum())

    def to_dict(self) -> dict:
        return {
            "schema": METRICS_SCHEMA,
            "version": METRICS_VERSION,
            "classes": list(self.classes),
            "n_vehicles": self.n_vehicles,
            "overall_accuracy": self.overall_accuracy,
            "mean_accuracy": self.mean_accuracy(),
            "per_class_accuracy": self.per_class_accuracy,
            "confusion": {
                "labels": list(CLASSES),
                "matrix": self.confusion.tolist(),
                "row_totals": self.row_totals.tolist(),
            },
            "loss_curve": list(self.loss_curve),
            **({"extra": self.extra} if self.extra else {}),
        }

    @classmethod
    def from_dict(cls, blob: dict) -> "MetricsReport":
        if blob.get("schema") != METRICS_SCHEMA:
            raise ValueError("not a metrics report")
        if blob.get("version") != METRICS_VERSION:
            raise ValueError(f"unsupported metrics version {blob.get('version')}")
        return cls(
            np.asarray(blob["confusion"]["matrix"], dtype=np.int64),
            tuple(blob["classes"]),
            list(blob.get("loss_curve", [])),
            dict(blob.get("extra", {})),
        )

    def to_json(self) -> str:
        return dumps(self.to_dict())

    def to_text(self) -> str:
        width = max(6, *(len(c) for c in CLASSES)) + 1
        head = " " * width + "".join(f"{c:>{width}}" for c in CLASSES) + f"{'total':>{width}}"
        lines = [head]
        for i, c in enumerate(CLASSES):
            row = "".join(f"{v:>{width}d}" for v in self.confusion[i])
            lines.append(f"{c:<{width}}{row}{self.row_totals[i]:>{width}d}")
        lines.append("")
        for c, a in self.per_class_accuracy.items():
            lines.append(f"{c:<{width}}{'-':>7}" if a is None else f"{c:<{width}}{100 * a:6.2f}%")
        lines.append(f"{'overall':<{width}}{100 * self.overall_accuracy:6.2f}%")
        return "\n".join(lines)


def dumps(blob) -> str:
    """Canonical JSON: sorted keys, repr floats; identical inputs give identical bytes."""
    return json.dumps(blob, sort_keys=True, indent=1, allow_nan=False)


def loss_samples(losses: Sequence[float], k: int = 10) -> list[float]:
    """Up to ``k`` evenly spaced samples of a loss curve, always keeping the last."""
    losses = list(losses)
    if len(losses) <= k:
        return [float(x) for x in losses]
    idx = np.unique(np.linspace(0, len(losses) - 1, k).round().astype(int))
    return [float(losses[i]) for i in idx]


def table_text(rows: dict[str, dict[str, Optional[float]]], classes=CLASSES, title: str = "") -> str:
    """Aligned per-class accuracy table; ``rows`` maps column label -> {class: acc}."""
    labels = list(rows)
    width = max(8, *(len(l) + 2 for l in labels)) if labels else 8
    lines = [title] if title else []
    lines.append(f"{'class':<8}" + "".join(f"{l:>{width}}" for l in labels))

    def fmt(v):
        return f"{'-':>{width}}" if v is None else f"{100 * v:>{width}.2f}"

    for c in classes:
        lines.append(f"{c:<8}" + "".join(fmt(rows[l].get(c)) for l in labels))
    lines.append(f"{'mean':<8}" + "".join(fmt(_mean(rows[l], classes)) for l in labels))
    return "\n".join(lines)


def _mean(row, classes):
    vals = [row.get(c) for c in classes if row.get(c) is not None]
    return float(np.mean(vals)) if vals else None
