"""Confusion-matrix and precision/recall/F1 harness for classifier audits."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class ConfusionMatrix:
    """Square count grid; rows are true classes, columns predicted."""

    classes: tuple[str, ...]
    counts: np.ndarray  # shape (k, k), non-negative ints

    def __post_init__(self) -> None:
        k = len(self.classes)
        if self.counts.shape != (k, k):
            raise ValueError(f"counts shape {self.counts.shape} != ({k}, {k})")
        if (self.counts < 0).any():
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def support(self) -> np.ndarray:
        return self.counts.sum(axis=1)


@dataclass(frozen=True)
class ClassMetrics:
    """Per-class and averaged precision/recall/F1 for one confusion matrix."""

    classes: tuple[str, ...]
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    micro_precision: float
    micro_recall: float
    micro_f1: float
    macro_precision: float
    macro_recall: float
    macro_f1: float

    @property
    def accuracy(self) -> float:
        # Micro precision equals accuracy for single-label classification.
        return self.micro_precision


def confusion(
    truth: Sequence[str], predicted: Sequence[str], classes: Sequence[str]
) -> ConfusionMatrix:
    """Tally aligned truth/prediction sequences over a fixed class alphabet.

    Sequences must have equal length; labels outside ``classes`` are a
    contract violation and raise.
    """
    if len(truth) != len(predicted):
        raise ValueError(
            f"length mismatch: {len(truth)} truth labels vs {len(predicted)} predictions"
        )
    index = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(truth, predicted):
        try:
            counts[index[t], index[p]] += 1
        except KeyError as exc:
            raise ValueError(f"label {exc.args[0]!r} not in class list") from None
    return ConfusionMatrix(classes=tuple(classes), counts=counts)


def _f1(p: float, r: float) -> float:
    return 2.0 * p * r / (p + r) if p + r > 0 else 0.0


def metrics(cm: ConfusionMatrix) -> ClassMetrics:
    """Precision/recall/F1 per class plus micro and macro averages.

    Per-class precision is diagonal over column sum and recall diagonal
    over row sum, with 0 substituted when a denominator is empty. Macro
    averages are unweighted means over classes with nonzero support.
    """
    counts = cm.counts.astype(np.float64)
    if counts.sum() == 0:
        raise ValueError("confusion matrix is empty")
    diag = np.diag(counts)
    col_sums = counts.sum(axis=0)
    row_sums = counts.sum(axis=1)

    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(col_sums > 0, diag / np.where(col_sums > 0, col_sums, 1), 0.0)
        recall = np.where(row_sums > 0, diag / np.where(row_sums > 0, row_sums, 1), 0.0)
    f1 = np.array([_f1(p, r) for p, r in zip(precision, recall)])

    total = counts.sum()
    micro = float(diag.sum() / total)

    supported = row_sums > 0
    macro_p = float(precision[supported].mean()) if supported.any() else 0.0
    macro_r = float(recall[supported].mean()) if supported.any() else 0.0
    macro_f = float(f1[supported].mean()) if supported.any() else 0.0

    return ClassMetrics(
        classes=cm.classes,
        precision=precision,
        recall=recall,
        f1=f1,
        support=row_sums.astype(np.int64),
        micro_precision=micro,
        micro_recall=micro,
        micro_f1=micro,
        macro_precision=macro_p,
        macro_recall=macro_r,
        macro_f1=macro_f,
    )


def metrics_rows(m: ClassMetrics) -> list[dict[str, object]]:
    """Rows for the metrics CSV: one per class plus micro/macro summary rows."""
    rows: list[dict[str, object]] = []
    for i, name in enumerate(m.classes):
        rows.append(
            {
                "class": name,
                "precision": float(m.precision[i]),
                "recall": float(m.recall[i]),
                "f1": float(m.f1[i]),
                "support": int(m.support[i]),
            }
        )
    rows.append(
        {
            "class": "overall-micro",
            "precision": m.micro_precision,
            "recall": m.micro_recall,
            "f1": m.micro_f1,
            "support": int(m.support.sum()),
        }
    )
    rows.append(
        {
            "class": "overall-macro",
            "precision": m.macro_precision,
            "recall": m.macro_recall,
            "f1": m.macro_f1,
            "support": int(m.support.sum()),
        }
    )
    return rows


def format_metrics_table(m: ClassMetrics) -> str:
    """Human-readable table with per-class rows and an overall line."""
    header = f"{'Class':<16}{'Precision':>10}{'Recall':>10}{'F1 score':>10}{'Support':>9}"
    lines = [header, "-" * len(header)]
    for row in metrics_rows(m):
        lines.append(
            f"{row['class']:<16}{row['precision']:>10.2f}{row['recall']:>10.2f}"
            f"{row['f1']:>10.2f}{row['support']:>9d}"
        )
    return "\n".join(lines)
