"""City- and tract-level roof-distribution statistics and map exports.

Shares are always computed over buildings with a valid roof; buildings
whose roof is still absent (classifier unknowns awaiting imputation)
are reported as a separate share, never silently dropped. The under-10
filter applies to map exports only — tabular reports keep every tract.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .ingest import TractPolygon
from .records import Inventory, RoofSource
from .taxonomy import VALID_CLASSES, RoofClass, is_complex, is_gable

UNASSIGNED_TRACT = "unassigned"
MIN_MAP_BUILDINGS = 10

TRACT_REPORT_COLUMNS = (
    "tract_id",
    "n_buildings",
    "n_valid",
    *(c.value for c in VALID_CLASSES),
    "gable_share",
    "complex_share",
    "unknown_share",
    "included",
)


@dataclass(frozen=True)
class TractSummary:
    tract_id: str
    n_buildings: int
    counts: tuple[int, ...]  # aligned with VALID_CLASSES
    included: bool

    def __post_init__(self) -> None:
        if len(self.counts) != len(VALID_CLASSES):
            raise ValueError("counts must align with the valid class list")
        if any(c < 0 for c in self.counts) or self.n_valid > self.n_buildings:
            raise ValueError("inconsistent tract counts")

    @property
    def n_valid(self) -> int:
        return sum(self.counts)

    def _share(self, predicate) -> float:
        if self.n_valid == 0:
            return 0.0
        hits = sum(
            count for cls, count in zip(VALID_CLASSES, self.counts) if predicate(cls)
        )
        return hits / self.n_valid

    @property
    def gable_share(self) -> float:
        return self._share(is_gable)

    @property
    def complex_share(self) -> float:
        return self._share(is_complex)

    @property
    def unknown_share(self) -> float:
        # Roof-absent buildings: classifier unknowns not yet imputed.
        return (self.n_buildings - self.n_valid) / self.n_buildings


def tract_summaries(inventory: Inventory) -> list[TractSummary]:
    """One summary per tract id, sorted; unassigned buildings pool under
    a sentinel row."""
    totals: dict[str, int] = {}
    counts: dict[str, list[int]] = {}
    index = {cls: i for i, cls in enumerate(VALID_CLASSES)}
    for record in inventory:
        tract = record.tract_id or UNASSIGNED_TRACT
        totals[tract] = totals.get(tract, 0) + 1
        if record.roof is not None:
            counts.setdefault(tract, [0] * len(VALID_CLASSES))[index[record.roof]] += 1
    summaries = []
    for tract in sorted(totals):
        n = totals[tract]
        summaries.append(
            TractSummary(
                tract_id=tract,
                n_buildings=n,
                counts=tuple(counts.get(tract, [0] * len(VALID_CLASSES))),
                included=n >= MIN_MAP_BUILDINGS,
            )
        )
    return summaries


def tract_report_rows(summaries: Sequence[TractSummary]) -> list[list[object]]:
    return [
        [
            s.tract_id,
            s.n_buildings,
            s.n_valid,
            *s.counts,
            repr(s.gable_share),
            repr(s.complex_share),
            repr(s.unknown_share),
            "true" if s.included else "false",
        ]
        for s in summaries
    ]


@dataclass(frozen=True)
class CityDistribution:
    """Class proportions over buildings passing the source filter."""

    sources: tuple[RoofSource, ...]
    n_total: int
    counts: tuple[int, ...]  # aligned with VALID_CLASSES

    @property
    def n_counted(self) -> int:
        return sum(self.counts)

    @property
    def proportions(self) -> dict[RoofClass, float]:
        n = self.n_counted
        return {
            cls: (count / n if n else 0.0)
            for cls, count in zip(VALID_CLASSES, self.counts)
        }

    @property
    def gable_share(self) -> float:
        n = self.n_counted
        if n == 0:
            return 0.0
        return sum(c for cls, c in zip(VALID_CLASSES, self.counts) if is_gable(cls)) / n

    @property
    def complex_share(self) -> float:
        n = self.n_counted
        if n == 0:
            return 0.0
        return sum(c for cls, c in zip(VALID_CLASSES, self.counts) if is_complex(cls)) / n

    @property
    def excluded_share(self) -> float:
        """Share of all buildings not in the denominator (absent roof or
        filtered-out source)."""
        if self.n_total == 0:
            return 0.0
        return (self.n_total - self.n_counted) / self.n_total


def city_distribution(
    inventory: Inventory,
    sources: tuple[RoofSource, ...] = (RoofSource.CLASSIFIED, RoofSource.IMPUTED),
) -> CityDistribution:
    index = {cls: i for i, cls in enumerate(VALID_CLASSES)}
    counts = [0] * len(VALID_CLASSES)
    for record in inventory:
        if record.roof is not None and record.roof_source in sources:
            counts[index[record.roof]] += 1
    return CityDistribution(
        sources=sources, n_total=len(inventory), counts=tuple(counts)
    )


def city_report_rows(dist: CityDistribution) -> list[list[object]]:
    rows: list[list[object]] = [
        [cls.value, count, repr(share)]
        for (cls, share), count in zip(dist.proportions.items(), dist.counts)
    ]
    rows.append(["gable_share", "", repr(dist.gable_share)])
    rows.append(["complex_share", "", repr(dist.complex_share)])
    rows.append(["excluded_share", "", repr(dist.excluded_share)])
    return rows


# ---------------------------------------------------------------------------
# Map export


def _geometry_for(polygons: Sequence[TractPolygon]) -> dict:
    coords = [
        [[[x, y] for x, y in ring] for ring in polygon.rings] for polygon in polygons
    ]
    if len(coords) == 1:
        return {"type": "Polygon", "coordinates": coords[0]}
    return {"type": "MultiPolygon", "coordinates": coords}


def export_map(
    summaries: Sequence[TractSummary], tracts: Iterable[TractPolygon]
) -> tuple[dict, tuple[str, ...]]:
    """Join summaries onto tract polygons as a FeatureCollection.

    Tracts under the map threshold are omitted entirely. Returns the
    document plus the tract ids that had a summary but no polygon (the
    unassigned sentinel typically lands there).
    """
    by_tract: dict[str, list[TractPolygon]] = {}
    for polygon in tracts:
        by_tract.setdefault(polygon.tract_id, []).append(polygon)
    features = []
    missing = []
    for summary in sorted(summaries, key=lambda s: s.tract_id):
        if not summary.included:
            continue
        polygons = by_tract.get(summary.tract_id)
        if not polygons:
            missing.append(summary.tract_id)
            continue
        features.append(
            {
                "type": "Feature",
                "geometry": _geometry_for(polygons),
                "properties": {
                    "tract_id": summary.tract_id,
                    "n_buildings": summary.n_buildings,
                    "n_valid": summary.n_valid,
                    "gable_share": summary.gable_share,
                    "complex_share": summary.complex_share,
                    "unknown_share": summary.unknown_share,
                },
            }
        )
    return {"type": "FeatureCollection", "features": features}, tuple(missing)


def write_map(document: dict, path: str | Path) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(document, sort_keys=True) + "\n", encoding="utf-8")
