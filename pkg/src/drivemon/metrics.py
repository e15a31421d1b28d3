"""Scoring: Top-1 accuracy, confusion matrices, per-class F1, fold aggregation."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # (C, C) int64, rows = true class, columns = predicted
    class_table: tuple[str, ...]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class FoldMetrics:
    top1: float
    per_class_f1: np.ndarray  # (C,)
    macro_f1: float
    confusion: ConfusionMatrix


def top1_accuracy(preds: Sequence[int], labels: Sequence[int]) -> float:
    if len(preds) != len(labels):
        raise DataError(f"length mismatch: {len(preds)} predictions, {len(labels)} labels")
    if len(preds) == 0:
        raise DataError("cannot score zero items")
    p = np.asarray(preds)
    y = np.asarray(labels)
    return float((p == y).mean())


def confusion_matrix(preds: Sequence[int], labels: Sequence[int], class_table: Sequence[str]) -> ConfusionMatrix:
    if len(preds) != len(labels):
        raise DataError(f"length mismatch: {len(preds)} predictions, {len(labels)} labels")
    c = len(class_table)
    counts = np.zeros((c, c), dtype=np.int64)
    for y, p in zip(labels, preds):
        if not (0 <= y < c and 0 <= p < c):
            raise DataError(f"class index out of range [0, {c}): true={y}, pred={p}")
        counts[y, p] += 1
    return ConfusionMatrix(counts=counts, class_table=tuple(class_table))


def per_class_f1(cm: ConfusionMatrix) -> tuple[np.ndarray, float]:
    """Per-class F1 plus the macro mean over classes with support.

    Zero-division cases (no predictions or no support for a class) yield
    F1 = 0; classes with zero support are excluded from the macro mean.
    """
    counts = cm.counts.astype(np.float64)
    diag = np.diag(counts)
    col = counts.sum(axis=0)
    row = counts.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(col > 0, diag / np.where(col > 0, col, 1), 0.0)
        recall = np.where(row > 0, diag / np.where(row > 0, row, 1), 0.0)
        pr = precision + recall
        f1 = np.where(pr > 0, 2 * precision * recall / np.where(pr > 0, pr, 1), 0.0)
    supported = row > 0
    for idx in np.flatnonzero(~supported):
        logger.warning("class %r has zero support; F1 reported as 0", cm.class_table[idx])
    macro = float(f1[supported].mean()) if supported.any() else 0.0
    return f1, macro


def compute_fold_metrics(preds: Sequence[int], labels: Sequence[int], class_table: Sequence[str]) -> FoldMetrics:
    cm = confusion_matrix(preds, labels, class_table)
    f1, macro = per_class_f1(cm)
    return FoldMetrics(
        top1=top1_accuracy(preds, labels),
        per_class_f1=f1,
        macro_f1=macro,
        confusion=cm,
    )


def aggregate_folds(folds: Sequence[FoldMetrics]) -> tuple[float, float, float]:
    """Unweighted fold mean of Top-1, its population variance, and mean macro F1."""
    if not folds:
        raise DataError("no folds to aggregate")
    top1 = np.array([f.top1 for f in folds], dtype=np.float64)
    macro = np.array([f.macro_f1 for f in folds], dtype=np.float64)
    return float(top1.mean()), float(top1.var()), float(macro.mean())


def write_confusion_csv(cm: ConfusionMatrix, path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true\\pred"] + list(cm.class_table))
        for i, name in enumerate(cm.class_table):
            writer.writerow([name] + [str(int(v)) for v in cm.counts[i]])
    return path
