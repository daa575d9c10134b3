"""Evaluation: confusion matrices and multiclass metrics.

Definitions (per class c): precision = TP/(TP+FP), recall = TP/(TP+FN),
f1 = harmonic mean of the two; classes with a zero denominator contribute
0 and are flagged. Macro averages are unweighted means over classes;
weighted averages use class support, which makes weighted recall equal
overall accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from imagedx.artifact import TrainedModel, predict_logits
from imagedx.dataset import DatasetManifest, load_sample
from imagedx.errors import EmptyDataset, EmptyMatrix, LengthMismatch
from imagedx.labels import NUM_CLASSES, catalog, format_label
from imagedx.nn.layers import PROB_FLOOR, softmax

AVERAGING_MODES = ("weighted", "macro")


@dataclass
class ConfusionMatrix:
    """K x K counts; rows are true classes, columns predicted classes."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise ValueError("confusion matrix must be square")
        if (self.counts < 0).any():
            raise ValueError("confusion matrix entries must be nonnegative")

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    def total(self) -> int:
        return int(self.counts.sum())

    def trace(self) -> int:
        return int(np.trace(self.counts))


def confusion_matrix(
    truths: Sequence[int], preds: Sequence[int], num_classes: int = NUM_CLASSES
) -> ConfusionMatrix:
    """Count (true, predicted) pairs into a K x K matrix."""
    truths = np.asarray(truths, dtype=np.int64)
    preds = np.asarray(preds, dtype=np.int64)
    if truths.shape != preds.shape:
        raise LengthMismatch(
            f"{truths.shape[0] if truths.ndim else 0} truths vs "
            f"{preds.shape[0] if preds.ndim else 0} predictions"
        )
    if truths.size and (
        truths.min() < 0
        or truths.max() >= num_classes
        or preds.min() < 0
        or preds.max() >= num_classes
    ):
        raise IndexError(f"class indices must lie in 0..{num_classes - 1}")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (truths, preds), 1)
    return ConfusionMatrix(counts)


@dataclass
class ClassMetrics:
    label: str
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class EvaluationMetrics:
    accuracy: float
    averaging: str
    per_class: list[ClassMetrics]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    zero_division_classes: tuple[int, ...] = ()
    loss: float | None = None

    @property
    def precision(self) -> float:
        return getattr(self, f"{self.averaging}_precision")

    @property
    def recall(self) -> float:
        return getattr(self, f"{self.averaging}_recall")

    @property
    def f1(self) -> float:
        return getattr(self, f"{self.averaging}_f1")


def metrics_from_confusion(
    cm: ConfusionMatrix, averaging: str = "weighted", labels: Sequence[str] | None = None
) -> EvaluationMetrics:
    """Derive accuracy and per-class/aggregate precision, recall, f1."""
    if averaging not in AVERAGING_MODES:
        raise ValueError(f"averaging must be one of {AVERAGING_MODES}")
    total = cm.total()
    if total == 0:
        raise EmptyMatrix("confusion matrix has no samples")
    counts = cm.counts.astype(np.float64)
    tp = np.diag(counts)
    support = counts.sum(axis=1)
    predicted = counts.sum(axis=0)

    flagged: set[int] = set()
    precision = np.zeros(cm.num_classes)
    recall = np.zeros(cm.num_classes)
    f1 = np.zeros(cm.num_classes)
    for c in range(cm.num_classes):
        if predicted[c] > 0:
            precision[c] = tp[c] / predicted[c]
        else:
            flagged.add(c)
        if support[c] > 0:
            recall[c] = tp[c] / support[c]
        else:
            flagged.add(c)
        if precision[c] + recall[c] > 0:
            f1[c] = 2 * precision[c] * recall[c] / (precision[c] + recall[c])
        else:
            flagged.add(c)

    weights = support / total
    if labels is None:
        labels = [str(i) for i in range(cm.num_classes)]
    per_class = [
        ClassMetrics(
            label=labels[c],
            precision=float(precision[c]),
            recall=float(recall[c]),
            f1=float(f1[c]),
            support=int(support[c]),
        )
        for c in range(cm.num_classes)
    ]
    return EvaluationMetrics(
        accuracy=cm.trace() / total,
        averaging=averaging,
        per_class=per_class,
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()),
        weighted_precision=float((precision * weights).sum()),
        weighted_recall=float((recall * weights).sum()),
        weighted_f1=float((f1 * weights).sum()),
        zero_division_classes=tuple(sorted(flagged)),
    )


def evaluate(
    model: TrainedModel,
    manifest: DatasetManifest,
    split: str,
    batch_size: int = 32,
    averaging: str = "weighted",
) -> tuple[EvaluationMetrics, ConfusionMatrix]:
    """Run inference over a split; aggregate loss, confusion, and metrics."""
    entries = manifest.split_entries(split)
    if not entries:
        raise EmptyDataset(f"{split} split is empty")
    cat = catalog()
    truths: list[int] = []
    preds: list[int] = []
    total_loss = 0.0
    for start in range(0, len(entries), batch_size):
        chunk = entries[start : start + batch_size]
        batch = np.stack(
            [
                load_sample(entry, model.preprocess).values.transpose(2, 0, 1)
                for entry in chunk
            ]
        ).astype(np.float32)
        targets = np.array([cat.index_of(entry.label) for entry in chunk])
        logits = predict_logits(model, batch)
        probs = softmax(logits.astype(np.float64))
        picked = probs[np.arange(len(chunk)), targets]
        total_loss += float(-np.log(np.maximum(picked, PROB_FLOOR)).sum())
        truths.extend(targets.tolist())
        preds.extend(probs.argmax(axis=1).tolist())
    cm = confusion_matrix(truths, preds, num_classes=model.config.num_classes)
    metrics = metrics_from_confusion(
        cm, averaging=averaging, labels=list(model.catalog_strings)
    )
    metrics.loss = total_loss / len(entries)
    return metrics, cm


METRICS_FILE_HEADER = "imagedx-metrics v1"


def write_metrics_file(
    path: Path | str, metrics: EvaluationMetrics, cm: ConfusionMatrix, split: str
) -> None:
    """Serialize metrics + confusion matrix in the documented text format."""
    lines = [METRICS_FILE_HEADER]
    lines.append(f"split\t{split}")
    lines.append(f"samples\t{cm.total()}")
    loss = "" if metrics.loss is None else f"{metrics.loss:.6f}"
    lines.append(f"loss\t{loss}")
    lines.append(f"accuracy\t{metrics.accuracy:.6f}")
    lines.append(f"averaging\t{metrics.averaging}")
    for mode in AVERAGING_MODES:
        for name in ("precision", "recall", "f1"):
            value = getattr(metrics, f"{mode}_{name}")
            lines.append(f"{name}_{mode}\t{value:.6f}")
    for i, pc in enumerate(metrics.per_class):
        lines.append(
            f"class\t{i}\t{pc.label}\t{pc.support}"
            f"\t{pc.precision:.6f}\t{pc.recall:.6f}\t{pc.f1:.6f}"
        )
    for i in range(cm.num_classes):
        row = " ".join(str(v) for v in cm.counts[i].tolist())
        lines.append(f"matrix\t{i}\t{row}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_metrics_file(path: Path | str) -> dict:
    """Parse a metrics file back into a plain dict (tests, tooling)."""
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or text[0] != METRICS_FILE_HEADER:
        raise ValueError(f"{path} is not an imagedx metrics file")
    data: dict = {"per_class": [], "matrix": []}
    for line in text[1:]:
        if not line.strip():
            continue
        parts = line.split("\t")
        key = parts[0]
        if key == "class":
            data["per_class"].append(
                {
                    "index": int(parts[1]),
                    "label": parts[2],
                    "support": int(parts[3]),
                    "precision": float(parts[4]),
                    "recall": float(parts[5]),
                    "f1": float(parts[6]),
                }
            )
        elif key == "matrix":
            data["matrix"].append([int(v) for v in parts[2].split()])
        elif key in ("split", "averaging"):
            data[key] = parts[1]
        elif key == "samples":
            data[key] = int(parts[1])
        else:
            data[key] = float(parts[1]) if parts[1] else None
    return data
