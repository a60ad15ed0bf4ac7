"""Prediction-exchange file handling and inventory merging.

Any external image classifier feeds the pipeline through one CSV
contract: per-building scores over the six classes. Merging assigns the
argmax class; an unknown argmax routes the building into the missing
set for imputation instead of storing a label.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import ValidationError
from .files import read_csv_table, write_csv
from .records import BuildingRecord, Inventory, RoofSource
from .taxonomy import CLASS_ORDER, RoofClass

SCORE_SUM_TOLERANCE = 1e-6

PREDICTIONS_COLUMNS = (
    "building_id",
    "p_g",
    "p_scg",
    "p_ccg",
    "p_h",
    "p_ch",
    "p_unknown",
    "model_id",
)

# Peaked-score shape used by the stub classifier and the synth harness.
PEAK_SCORE = 0.9
OFF_PEAK_SCORE = 0.02


@dataclass(frozen=True)
class PredictionRecord:
    building_id: str
    scores: tuple[float, float, float, float, float, float]  # CLASS_ORDER
    model_id: str

    def __post_init__(self) -> None:
        if len(self.scores) != len(CLASS_ORDER):
            raise ValueError(f"expected {len(CLASS_ORDER)} scores, got {len(self.scores)}")
        if any(s < 0 for s in self.scores):
            raise ValueError(f"{self.building_id}: negative score")
        total = sum(self.scores)
        if not math.isclose(total, 1.0, abs_tol=SCORE_SUM_TOLERANCE):
            raise ValueError(f"{self.building_id}: scores sum to {total!r}, not 1")

    @property
    def argmax_class(self) -> RoofClass:
        # Ties break to the lowest canonical index: max() scans in order
        # and only replaces on a strictly greater score.
        best = 0
        for i in range(1, len(self.scores)):
            if self.scores[i] > self.scores[best]:
                best = i
        return CLASS_ORDER[best]


def peaked_scores(cls: RoofClass) -> tuple[float, ...]:
    return tuple(
        PEAK_SCORE if c is cls else OFF_PEAK_SCORE for c in CLASS_ORDER
    )


def stub_predict(
    inventory: Inventory,
    model_id: str = "stub-hash-v1",
    truth: Mapping[str, RoofClass] | None = None,
) -> list[PredictionRecord]:
    """Deterministic stand-in classifier for end-to-end tests.

    With a truth table the scores peak on the true class; without one
    the class is a stable hash of the building id, so reruns agree.
    """
    records = []
    for b in inventory:
        if truth is not None:
            cls = truth[b.building_id]
        else:
            digest = hashlib.sha256(b.building_id.encode("utf-8")).digest()
            cls = CLASS_ORDER[digest[0] % len(CLASS_ORDER)]
        records.append(PredictionRecord(b.building_id, peaked_scores(cls), model_id))
    return records


def parse_predictions(path: str | Path) -> list[PredictionRecord]:
    header, rows = read_csv_table(path)
    if tuple(header) != PREDICTIONS_COLUMNS:
        raise ValidationError(
            f"{path}: unexpected header {header!r}; expected "
            f"{','.join(PREDICTIONS_COLUMNS)}"
        )
    records = []
    seen: set[str] = set()
    for line, row in rows:
        if len(row) != len(PREDICTIONS_COLUMNS):
            raise ValidationError(f"{path}: line {line}: wrong field count")
        building_id = row[0].strip()
        if not building_id:
            raise ValidationError(f"{path}: line {line}: empty building_id")
        if building_id in seen:
            raise ValidationError(f"{path}: line {line}: duplicate prediction "
                                  f"for {building_id}")
        seen.add(building_id)
        try:
            scores = tuple(float(cell) for cell in row[1:7])
        except ValueError:
            raise ValidationError(f"{path}: line {line}: unparseable score") from None
        try:
            records.append(PredictionRecord(building_id, scores, row[7].strip()))
        except ValueError as exc:
            raise ValidationError(f"{path}: line {line}: {exc}") from None
    return records


def write_predictions(
    records: Iterable[PredictionRecord], path: str | Path, comments: Sequence[str] = ()
) -> None:
    rows = [
        [r.building_id, *(repr(s) for s in r.scores), r.model_id] for r in records
    ]
    write_csv(path, PREDICTIONS_COLUMNS, rows, comments)


@dataclass(frozen=True)
class ApplyResult:
    inventory: Inventory
    n_applied: int
    n_unknown: int
    discrepancies: tuple[str, ...]  # prediction ids with no inventory building

    @property
    def unknown_rate(self) -> float:
        return self.n_unknown / self.n_applied if self.n_applied else 0.0


def apply_predictions(
    inventory: Inventory, predictions: Sequence[PredictionRecord]
) -> ApplyResult:
    """Merge classifier output into the inventory.

    An unknown argmax leaves the roof absent (the building joins the
    missing set). Predictions naming no known building are reported, not
    fatal; buildings without predictions are simply left absent.
    """
    updated: list[BuildingRecord] = []
    discrepancies: list[str] = []
    n_applied = 0
    n_unknown = 0
    for pred in sorted(predictions, key=lambda p: p.building_id):
        record = inventory.records.get(pred.building_id)
        if record is None:
            discrepancies.append(pred.building_id)
            continue
        n_applied += 1
        cls = pred.argmax_class
        if cls is RoofClass.UNKNOWN:
            n_unknown += 1
            if record.roof is not None:
                updated.append(record.with_roof(None, RoofSource.ABSENT))
            continue
        updated.append(record.with_roof(cls, RoofSource.CLASSIFIED))
    merged = inventory.replace_records(updated) if updated else inventory
    return ApplyResult(merged, n_applied, n_unknown, tuple(discrepancies))


def align_labels(
    truth: Mapping[str, RoofClass], predictions: Sequence[PredictionRecord]
) -> tuple[list[RoofClass], list[RoofClass], tuple[str, ...]]:
    """Pair truth labels with predicted argmax classes by building id.

    Returns aligned (truth, predicted) lists over the intersection in
    sorted-id order, plus prediction ids that had no truth row.
    """
    by_id = {p.building_id: p for p in predictions}
    unmatched = tuple(sorted(set(by_id) - set(truth)))
    y_true: list[RoofClass] = []
    y_pred: list[RoofClass] = []
    for building_id in sorted(set(truth) & set(by_id)):
        y_true.append(truth[building_id])
        y_pred.append(by_id[building_id].argmax_class)
    return y_true, y_pred, unmatched
