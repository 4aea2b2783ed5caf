"""Confusion matrices, accuracy, and F-score for the 5-stage label scheme."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import N_STAGES, STAGE_NAMES
from .validation import as_labels


@dataclass(frozen=True)
class ConfusionMatrix:
    """5x5 stage confusion counts; rows are actual stages, columns predicted."""

    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total)

    def percent(self) -> np.ndarray:
        """Row-normalized percentages; an actual stage with no epochs stays 0."""
        row_sums = self.counts.sum(axis=1, keepdims=True)
        safe = np.where(row_sums > 0, row_sums, 1)
        return 100.0 * self.counts / safe

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)


def confusion(preds, truths) -> ConfusionMatrix:
    """Tally counts[actual][predicted] over aligned prediction/truth arrays."""
    preds = as_labels(np.asarray(preds), name="preds")
    truths = as_labels(np.asarray(truths), name="truths")
    if len(preds) != len(truths):
        raise ValueError(f"length mismatch: {len(preds)} predictions, {len(truths)} truths")
    if len(preds) == 0:
        raise ValueError("cannot tally an empty prediction list")
    counts = np.zeros((N_STAGES, N_STAGES), dtype=np.int64)
    np.add.at(counts, (truths, preds), 1)
    return ConfusionMatrix(counts)


def per_class_f1(cm: ConfusionMatrix) -> np.ndarray:
    """F1 = 2PR/(P+R) per stage; a stage with P+R = 0 contributes 0."""
    counts = cm.counts.astype(np.float64)
    tp = np.diag(counts)
    pred_sums = counts.sum(axis=0)
    true_sums = counts.sum(axis=1)
    precision = np.divide(tp, pred_sums, out=np.zeros(N_STAGES), where=pred_sums > 0)
    recall = np.divide(tp, true_sums, out=np.zeros(N_STAGES), where=true_sums > 0)
    pr = precision + recall
    return np.divide(2 * precision * recall, pr, out=np.zeros(N_STAGES), where=pr > 0)


def f1_macro(cm: ConfusionMatrix) -> float:
    """Unweighted mean of the five per-class F1 scores."""
    return float(per_class_f1(cm).mean())


def f1_weighted(cm: ConfusionMatrix) -> float:
    """Support-weighted mean of per-class F1 (weights = actual-class counts)."""
    support = cm.counts.sum(axis=1)
    return float((per_class_f1(cm) * support).sum() / support.sum())


def format_confusion_csv(cm: ConfusionMatrix) -> str:
    """Percent view as CSV text: predicted stages across, actual stages down."""
    lines = ["stage," + ",".join(STAGE_NAMES)]
    for name, row in zip(STAGE_NAMES, cm.percent()):
        lines.append(name + "," + ",".join(f"{v:.6f}" for v in row))
    return "\n".join(lines) + "\n"
