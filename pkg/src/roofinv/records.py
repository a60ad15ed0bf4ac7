"""Building records and the in-memory inventory they live in."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Iterator

from .taxonomy import RoofClass


class RoofSource(str, Enum):
    """Where a building's roof label came from."""

    CLASSIFIED = "classified"
    IMPUTED = "imputed"
    LABELED_TRUTH = "labeled-truth"
    ABSENT = "absent"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class BuildingRecord:
    """One parcel: location, tax-roll attributes, and an optional roof label.

    ``building_area`` is in square meters. ``roof`` must be present exactly
    when ``roof_source`` says it was classified, imputed, or manually
    labeled, and absent when the source is ``absent``.
    """

    building_id: str
    latitude: float
    longitude: float
    year_built: int
    building_area: float
    building_value: float | None = None
    stories: int | None = None
    tract_id: str | None = None
    roof: RoofClass | None = None
    roof_source: RoofSource = RoofSource.ABSENT

    def __post_init__(self) -> None:
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude {self.latitude} out of range")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude {self.longitude} out of range")
        if not self.building_area > 0:
            raise ValueError(f"building_area must be positive, got {self.building_area}")
        if self.stories is not None and self.stories < 1:
            raise ValueError(f"stories must be >= 1, got {self.stories}")
        if self.building_value is not None and self.building_value < 0:
            raise ValueError(f"building_value must be >= 0, got {self.building_value}")
        has_roof = self.roof is not None
        if self.roof_source is RoofSource.ABSENT:
            if has_roof:
                raise ValueError("roof present but roof_source is absent")
        elif not has_roof:
            raise ValueError(f"roof_source {self.roof_source} requires a roof")
        if self.roof is RoofClass.UNKNOWN:
            raise ValueError("unknown is a classifier output, not a storable roof")

    @property
    def centroid(self) -> tuple[float, float]:
        return (self.latitude, self.longitude)

    def with_roof(self, roof: RoofClass, source: RoofSource) -> BuildingRecord:
        return replace(self, roof=roof, roof_source=source)

    def with_tract(self, tract_id: str | None) -> BuildingRecord:
        return replace(self, tract_id=tract_id)


@dataclass
class Inventory:
    """Immutable-by-convention collection of buildings keyed by id.

    Iteration is deterministic: records come back sorted by building_id.
    Provenance fields describe the source the inventory was parsed from
    and do not participate in equality.
    """

    records: dict[str, BuildingRecord]
    source: str | None = field(default=None, compare=False)
    n_source_rows: int = field(default=0, compare=False)
    n_rejected_rows: int = field(default=0, compare=False)

    @classmethod
    def from_records(
        cls, records: Iterable[BuildingRecord], source: str | None = None
    ) -> Inventory:
        by_id: dict[str, BuildingRecord] = {}
        for record in records:
            if record.building_id in by_id:
                raise ValueError(f"duplicate building_id {record.building_id!r}")
            by_id[record.building_id] = record
        return cls(records=dict(sorted(by_id.items())), source=source)

    def __iter__(self) -> Iterator[BuildingRecord]:
        for key in sorted(self.records):
            yield self.records[key]

    def __len__(self) -> int:
        return len(self.records)

    def __contains__(self, building_id: str) -> bool:
        return building_id in self.records

    def get(self, building_id: str) -> BuildingRecord | None:
        return self.records.get(building_id)

    def replace_records(self, updated: Iterable[BuildingRecord]) -> Inventory:
        """New inventory with the given records swapped in by id."""
        merged = dict(self.records)
        for record in updated:
            if record.building_id not in merged:
                raise KeyError(f"building_id {record.building_id!r} not in inventory")
            merged[record.building_id] = record
        return Inventory(
            records=merged,
            source=self.source,
            n_source_rows=self.n_source_rows,
            n_rejected_rows=self.n_rejected_rows,
        )

    def labeled(self, *sources: RoofSource) -> dict[str, RoofClass]:
        """Map of building_id to roof for records whose source is listed."""
        wanted = set(sources) or {RoofSource.CLASSIFIED}
        return {
            r.building_id: r.roof
            for r in self
            if r.roof is not None and r.roof_source in wanted
        }

    def missing_roofs(self) -> list[BuildingRecord]:
        return [r for r in self if r.roof is None]
