"""Shared builders and independent oracles for the test suite.

The oracle helpers re-derive expected results straight from definitions
(exhaustive scans, exact rational arithmetic) instead of calling back
into the package, so they can arbitrate correctness when a test and the
implementation disagree.
"""

from __future__ import annotations

import logging
import math
from fractions import Fraction

import pytest

from roofinv.records import BuildingRecord, Inventory, RoofSource

EARTH_RADIUS_M = 6_371_000.0


@pytest.fixture(autouse=True)
def reset_warning_capture():
    """cli.main routes warnings into logging; undo that between tests."""
    yield
    logging.captureWarnings(False)


def record(
    building_id="b1",
    latitude=35.0,
    longitude=-78.0,
    year_built=1990,
    building_area=150.0,
    roof=None,
    roof_source=RoofSource.ABSENT,
    **kwargs,
):
    """BuildingRecord with workable defaults."""
    return BuildingRecord(
        building_id=building_id,
        latitude=latitude,
        longitude=longitude,
        year_built=year_built,
        building_area=building_area,
        roof=roof,
        roof_source=roof_source,
        **kwargs,
    )


def labeled(building_id, latitude, longitude, roof, **kwargs):
    kwargs.setdefault("roof_source", RoofSource.CLASSIFIED)
    return record(building_id, latitude, longitude, roof=roof, **kwargs)


def inventory(records):
    return Inventory.from_records(records)


def oracle_distance_m(lat1, lon1, lat2, lon2):
    """Great-circle distance, independently coded (atan2 form)."""
    p1 = math.radians(lat1)
    p2 = math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2.0) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.atan2(math.sqrt(a), math.sqrt(max(0.0, 1.0 - a)))


def oracle_neighbors(points, radius_m):
    """O(n^2) scan over (id, lat, lon) triples: id -> ids within radius."""
    out = {}
    for bid, lat, lon in points:
        out[bid] = {
            other
            for other, lat2, lon2 in points
            if other != bid and oracle_distance_m(lat, lon, lat2, lon2) <= radius_m
        }
    return out


def oracle_metrics(counts):
    """Per-class P/R/F1 plus micro/macro from the bare definitions.

    ``counts`` is a k x k list of lists (rows true, columns predicted).
    Exact rational arithmetic throughout; floats only at the boundary.
    """
    k = len(counts)
    col = [sum(counts[i][j] for i in range(k)) for j in range(k)]
    row = [sum(counts[i]) for i in range(k)]
    precision = []
    recall = []
    f1 = []
    for j in range(k):
        p = Fraction(counts[j][j], col[j]) if col[j] else Fraction(0)
        r = Fraction(counts[j][j], row[j]) if row[j] else Fraction(0)
        f = 2 * p * r / (p + r) if p + r else Fraction(0)
        precision.append(p)
        recall.append(r)
        f1.append(f)
    total = sum(row)
    diag = sum(counts[j][j] for j in range(k))
    micro = Fraction(diag, total)
    supported = [j for j in range(k) if row[j]]
    macro_p = sum(precision[j] for j in supported) / len(supported) if supported else Fraction(0)
    macro_r = sum(recall[j] for j in supported) / len(supported) if supported else Fraction(0)
    macro_f = sum(f1[j] for j in supported) / len(supported) if supported else Fraction(0)
    return {
        "precision": [float(p) for p in precision],
        "recall": [float(r) for r in recall],
        "f1": [float(f) for f in f1],
        "micro": float(micro),
        "macro_precision": float(macro_p),
        "macro_recall": float(macro_r),
        "macro_f1": float(macro_f),
    }
