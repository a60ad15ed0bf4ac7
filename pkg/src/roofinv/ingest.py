"""Building-table and census-tract ingestion.

Buildings arrive as a headered UTF-8 CSV:

    building_id,latitude,longitude,year_built,building_area,building_value,stories,tract_id

with two optional trailing columns ``roof,roof_source`` used by truth
files and by re-serialized inventories. Empty strings mean an absent
optional field. Tracts arrive as a GeoJSON FeatureCollection of
Polygon/MultiPolygon features carrying a ``tract_id`` property.

Row-level problems reject the row into a report instead of aborting the
parse; structural problems (missing file, bad header, bad encoding) are
fatal.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import MissingInputError, ValidationError
from .files import read_csv_table, read_text, write_csv
from .records import BuildingRecord, Inventory, RoofSource
from .taxonomy import RoofClass

SQFT_TO_SQM = 0.092903

BUILDINGS_COLUMNS = (
    "building_id",
    "latitude",
    "longitude",
    "year_built",
    "building_area",
    "building_value",
    "stories",
    "tract_id",
)
ROOF_COLUMNS = ("roof", "roof_source")

REASON_BAD_COORDINATE = "bad-coordinate"
REASON_NONPOSITIVE_AREA = "nonpositive-area"
REASON_DUPLICATE_ID = "duplicate-id"
REASON_MISSING_FIELD = "missing-required-field"
REASON_INVALID_ROOF = "invalid-roof"


@dataclass(frozen=True)
class RowRejection:
    line: int  # physical line number in the source file
    reason: str


@dataclass(frozen=True)
class FeatureRejection:
    feature_index: int
    reason: str


def _parse_float(raw: str) -> float | None:
    try:
        value = float(raw)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def _parse_int(raw: str) -> int | None:
    try:
        return int(raw)
    except ValueError:
        return None


def parse_buildings(
    path: str | Path, area_unit: str = "sqm"
) -> tuple[Inventory, list[RowRejection]]:
    """Parse a buildings CSV into an Inventory plus a rejection report.

    ``area_unit="sqft"`` converts areas to square meters at ingest.
    Optional fields that fail to parse are coalesced to absent; required
    fields that fail reject the whole row.
    """
    if area_unit not in ("sqm", "sqft"):
        raise ValueError(f"area_unit must be 'sqm' or 'sqft', got {area_unit!r}")
    header, rows = read_csv_table(path)
    has_roof = tuple(header) == BUILDINGS_COLUMNS + ROOF_COLUMNS
    if not has_roof and tuple(header) != BUILDINGS_COLUMNS:
        raise ValidationError(
            f"{path}: unexpected header {header!r}; expected "
            f"{','.join(BUILDINGS_COLUMNS)} (optionally + roof,roof_source)"
        )

    records: dict[str, BuildingRecord] = {}
    rejections: list[RowRejection] = []
    n_columns = len(header)

    for line, row in rows:
        if len(row) != n_columns:
            rejections.append(RowRejection(line, REASON_MISSING_FIELD))
            continue
        field = dict(zip(header, (cell.strip() for cell in row)))

        building_id = field["building_id"]
        if not building_id or not field["year_built"]:
            rejections.append(RowRejection(line, REASON_MISSING_FIELD))
            continue
        year_built = _parse_int(field["year_built"])
        if year_built is None:
            rejections.append(RowRejection(line, REASON_MISSING_FIELD))
            continue

        if not field["latitude"] or not field["longitude"]:
            rejections.append(RowRejection(line, REASON_MISSING_FIELD))
            continue
        latitude = _parse_float(field["latitude"])
        longitude = _parse_float(field["longitude"])
        if (
            latitude is None
            or longitude is None
            or not -90.0 <= latitude <= 90.0
            or not -180.0 <= longitude <= 180.0
        ):
            rejections.append(RowRejection(line, REASON_BAD_COORDINATE))
            continue

        if not field["building_area"]:
            rejections.append(RowRejection(line, REASON_MISSING_FIELD))
            continue
        area = _parse_float(field["building_area"])
        if area is None or area <= 0:
            rejections.append(RowRejection(line, REASON_NONPOSITIVE_AREA))
            continue
        if area_unit == "sqft":
            area *= SQFT_TO_SQM

        if building_id in records:
            rejections.append(RowRejection(line, REASON_DUPLICATE_ID))
            continue

        value = _parse_float(field["building_value"]) if field["building_value"] else None
        if value is not None and value < 0:
            value = None
        stories = _parse_int(field["stories"]) if field["stories"] else None
        if stories is not None and stories < 1:
            stories = None
        tract_id = field["tract_id"] or None

        roof: RoofClass | None = None
        roof_source = RoofSource.ABSENT
        if has_roof and (field["roof"] or field["roof_source"]):
            try:
                roof = RoofClass(field["roof"])
                roof_source = RoofSource(field["roof_source"])
            except ValueError:
                rejections.append(RowRejection(line, REASON_INVALID_ROOF))
                continue
            if roof is RoofClass.UNKNOWN or roof_source is RoofSource.ABSENT:
                rejections.append(RowRejection(line, REASON_INVALID_ROOF))
                continue

        records[building_id] = BuildingRecord(
            building_id=building_id,
            latitude=latitude,
            longitude=longitude,
            year_built=year_built,
            building_area=area,
            building_value=value,
            stories=stories,
            tract_id=tract_id,
            roof=roof,
            roof_source=roof_source,
        )

    inventory = Inventory(records=dict(sorted(records.items())), source=str(path))
    inventory.n_source_rows = len(rows)
    inventory.n_rejected_rows = len(rejections)
    return inventory, rejections


def inventory_rows(inventory: Inventory) -> list[list[object]]:
    rows = []
    for r in inventory:
        rows.append(
            [
                r.building_id,
                repr(r.latitude),
                repr(r.longitude),
                r.year_built,
                repr(r.building_area),
                "" if r.building_value is None else repr(r.building_value),
                "" if r.stories is None else r.stories,
                r.tract_id or "",
                r.roof.value if r.roof is not None else "",
                r.roof_source.value if r.roof is not None else "",
            ]
        )
    return rows


def write_inventory(
    inventory: Inventory, path: str | Path, comments: Sequence[str] = ()
) -> None:
    """Serialize an inventory in the extended buildings CSV schema.

    Floats are written with repr so a parse/serialize/parse cycle is
    loss-free.
    """
    write_csv(path, BUILDINGS_COLUMNS + ROOF_COLUMNS, inventory_rows(inventory), comments)


def write_rejections(rejections: Sequence[RowRejection], path: str | Path,
                     comments: Sequence[str] = ()) -> None:
    write_csv(path, ("row", "reason"), [(r.line, r.reason) for r in rejections], comments)


# ---------------------------------------------------------------------------
# Census-tract polygons


@dataclass(frozen=True)
class TractPolygon:
    """One polygon of a census tract: an exterior ring plus hole rings.

    Ring coordinates are (lon, lat) in degrees, first point repeated at
    the end. A point on any ring edge counts as inside.
    """

    tract_id: str
    rings: tuple[tuple[tuple[float, float], ...], ...]

    @property
    def exterior(self) -> tuple[tuple[float, float], ...]:
        return self.rings[0]

    def contains(self, lat: float, lon: float) -> bool:
        """Even-odd ray-cast over all rings; boundary points are inside."""
        x, y = lon, lat
        inside = False
        for ring in self.rings:
            for (x1, y1), (x2, y2) in zip(ring, ring[1:]):
                if _on_segment(x, y, x1, y1, x2, y2):
                    return True
                if (y1 > y) != (y2 > y):
                    x_cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
                    if x_cross > x:
                        inside = not inside
        return inside


def _on_segment(px: float, py: float, x1: float, y1: float, x2: float, y2: float) -> bool:
    cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
    if cross != 0.0:
        return False
    return min(x1, x2) <= px <= max(x1, x2) and min(y1, y2) <= py <= max(y1, y2)


def _orientation(ax, ay, bx, by, cx, cy) -> int:
    cross = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    return (cross > 0) - (cross < 0)


def _segments_cross(p1, p2, p3, p4) -> bool:
    """Proper or improper intersection of segments p1p2 and p3p4."""
    o1 = _orientation(*p1, *p2, *p3)
    o2 = _orientation(*p1, *p2, *p4)
    o3 = _orientation(*p3, *p4, *p1)
    o4 = _orientation(*p3, *p4, *p2)
    if o1 != o2 and o3 != o4:
        return True
    for a, b, c in ((p1, p2, p3), (p1, p2, p4), (p3, p4, p1), (p3, p4, p2)):
        if _orientation(*a, *b, *c) == 0 and _on_segment(c[0], c[1], a[0], a[1], b[0], b[1]):
            return True
    return False


def _ring_self_intersects(ring: Sequence[tuple[float, float]]) -> bool:
    # Adjacent edges legitimately share an endpoint; everything else may not touch.
    edges = list(zip(ring[:-1], ring[1:]))
    n = len(edges)
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_cross(edges[i][0], edges[i][1], edges[j][0], edges[j][1]):
                return True
    return False


def _validate_rings(raw_rings: list) -> tuple[tuple[tuple[float, float], ...], ...] | str:
    rings = []
    for ring in raw_rings:
        points = tuple((float(x), float(y)) for x, y in ring)
        if len(points) < 4:
            return "ring-too-short"
        if points[0] != points[-1]:
            return "unclosed-ring"
        rings.append(points)
    if _ring_self_intersects(rings[0]):
        return "self-intersecting-exterior"
    return tuple(rings)


def parse_tracts(path: str | Path) -> tuple[list[TractPolygon], list[FeatureRejection]]:
    """Parse a tract FeatureCollection; multipolygons split per polygon.

    Invalid features are rejected individually and reported by feature
    index; a document that is not a FeatureCollection is fatal.
    """
    text = read_text(path)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON at line {exc.lineno}") from None
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise ValidationError(f"{path}: expected a GeoJSON FeatureCollection")

    tracts: list[TractPolygon] = []
    rejections: list[FeatureRejection] = []
    for i, feature in enumerate(doc.get("features", [])):
        properties = feature.get("properties") or {}
        tract_id = properties.get("tract_id")
        if tract_id is None or str(tract_id) == "":
            rejections.append(FeatureRejection(i, "missing-tract-id"))
            continue
        geometry = feature.get("geometry") or {}
        gtype = geometry.get("type")
        if gtype == "Polygon":
            polygons = [geometry.get("coordinates", [])]
        elif gtype == "MultiPolygon":
            polygons = geometry.get("coordinates", [])
        else:
            rejections.append(FeatureRejection(i, "unsupported-geometry"))
            continue
        parsed = []
        failure = None
        for raw_rings in polygons:
            if not raw_rings:
                failure = "empty-polygon"
                break
            try:
                result = _validate_rings(raw_rings)
            except (TypeError, ValueError):
                failure = "malformed-coordinates"
                break
            if isinstance(result, str):
                failure = result
                break
            parsed.append(result)
        if failure is not None:
            rejections.append(FeatureRejection(i, failure))
            continue
        for rings in parsed:
            tracts.append(TractPolygon(tract_id=str(tract_id), rings=rings))
    return tracts, rejections


def assign_tracts(inventory: Inventory, tracts: Iterable[TractPolygon]) -> Inventory:
    """Fill in tract_id by centroid containment (even-odd rule).

    A tract_id already present on the record is authoritative and kept.
    Buildings contained by no polygon keep an absent tract_id; that is
    not an error.
    """
    tract_list = list(tracts)
    updated = []
    for record in inventory:
        if record.tract_id is not None:
            continue
        for tract in tract_list:
            if tract.contains(record.latitude, record.longitude):
                updated.append(record.with_tract(tract.tract_id))
                break
    return inventory.replace_records(updated) if updated else inventory


def load_inventory(path: str | Path, area_unit: str = "sqm") -> Inventory:
    """Parse a buildings CSV, failing fast if any row is rejected.

    Intended for re-reading files the pipeline itself wrote.
    """
    inventory, rejections = parse_buildings(path, area_unit=area_unit)
    if rejections:
        raise ValidationError(
            f"{path}: {len(rejections)} rejected rows "
            f"(first: line {rejections[0].line}, {rejections[0].reason})"
        )
    return inventory
