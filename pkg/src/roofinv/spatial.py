"""Haversine neighbor search and neighborhood roof statistics.

The index is a uniform lat/lon grid over a sphere of radius 6,371 km.
Radius queries are exact: the grid only prunes candidates, and every
candidate is confirmed with the haversine distance, so results match a
brute-force scan set-for-set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .taxonomy import RoofClass, RoofFamily, is_complex, is_gable, to_features

EARTH_RADIUS_M = 6_371_000.0
METERS_PER_DEG_LAT = math.pi * EARTH_RADIUS_M / 180.0


def haversine(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in meters between two lat/lon points."""
    phi1 = math.radians(lat1)
    phi2 = math.radians(lat2)
    dphi = phi2 - phi1
    dlam = math.radians(lon2) - math.radians(lon1)
    a = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(a)))


@dataclass(frozen=True)
class NeighborFeatures:
    """Roof statistics of the labeled buildings around one building.

    ``neighbor_count`` counts labeled neighbors only; both ratios are
    present exactly when that count is positive.
    """

    type_ratio: float | None  # fraction of labeled neighbors with gable roofs
    complexity_ratio: float | None  # fraction with complex roofs
    neighbor_count: int

    def __post_init__(self) -> None:
        present = self.neighbor_count > 0
        if present != (self.type_ratio is not None) or present != (
            self.complexity_ratio is not None
        ):
            raise ValueError("ratios must be present iff labeled neighbors exist")


@dataclass(frozen=True)
class SweepPoint:
    radius_m: float
    accuracy: float
    missing_fraction: float
    n_evaluated: int


class NeighborIndex:
    """Immutable radius-query index over building centroids.

    Cell size trades pruning power against candidate-list length; the
    default suits the 50-150 m search radii used by the pipeline. Queries
    with any radius remain exact regardless of the cell size.
    """

    def __init__(self, points: Iterable[tuple[str, float, float]], cell_size_m: float = 150.0):
        ids: list[str] = []
        lats: list[float] = []
        lons: list[float] = []
        for building_id, lat, lon in points:
            ids.append(building_id)
            lats.append(lat)
            lons.append(lon)
        self._ids = ids
        self._row = {building_id: i for i, building_id in enumerate(ids)}
        if len(self._row) != len(ids):
            raise ValueError("duplicate building ids in index")
        self._lat = np.asarray(lats, dtype=np.float64)
        self._lon = np.asarray(lons, dtype=np.float64)
        self._lat_rad = np.radians(self._lat)
        self._lon_rad = np.radians(self._lon)
        self._cos_lat = np.cos(self._lat_rad)

        self._cell_lat_deg = cell_size_m / METERS_PER_DEG_LAT
        # Lon cells sized for the highest-latitude point so a cell is never
        # narrower than cell_size_m; the count must divide 360 exactly for
        # antimeridian wrap-around to index cleanly.
        max_abs_lat = float(np.abs(self._lat).max(initial=0.0))
        cos_ref = max(math.cos(math.radians(min(max_abs_lat, 89.0))), 1e-6)
        ideal_lon_deg = cell_size_m / (METERS_PER_DEG_LAT * cos_ref)
        self._n_lon_cells = max(1, int(360.0 // ideal_lon_deg))
        self._cell_lon_deg = 360.0 / self._n_lon_cells

        cells: dict[tuple[int, int], list[int]] = {}
        for i in range(len(ids)):
            cells.setdefault(self._cell_of(self._lat[i], self._lon[i]), []).append(i)
        self._cells = {key: np.asarray(rows, dtype=np.intp) for key, rows in cells.items()}

    def __len__(self) -> int:
        return len(self._ids)

    def __contains__(self, building_id: str) -> bool:
        return building_id in self._row

    @classmethod
    def from_inventory(cls, inventory, cell_size_m: float = 150.0) -> NeighborIndex:
        return cls(
            ((r.building_id, r.latitude, r.longitude) for r in inventory),
            cell_size_m=cell_size_m,
        )

    def _cell_of(self, lat: float, lon: float) -> tuple[int, int]:
        ilat = math.floor(lat / self._cell_lat_deg)
        ilon = math.floor((lon + 180.0) / self._cell_lon_deg) % self._n_lon_cells
        return ilat, ilon

    def _candidate_rows(self, lat: float, lon: float, radius_m: float) -> np.ndarray:
        # Exact bounding box of the spherical cap, padded one ulp-ish.
        ang = radius_m / EARTH_RADIUS_M * (1.0 + 1e-9)
        dlat_deg = math.degrees(ang)
        lat_lo = lat - dlat_deg
        lat_hi = lat + dlat_deg
        cos_phi = math.cos(math.radians(lat))
        sin_ang = math.sin(min(ang, math.pi / 2.0))
        if lat_hi >= 90.0 or lat_lo <= -90.0 or cos_phi <= sin_ang:
            lon_cells = range(self._n_lon_cells)
        else:
            dlon_deg = math.degrees(math.asin(sin_ang / cos_phi)) + 1e-9
            c_lo = math.floor((lon - dlon_deg + 180.0) / self._cell_lon_deg)
            c_hi = math.floor((lon + dlon_deg + 180.0) / self._cell_lon_deg)
            span = min(c_hi - c_lo + 1, self._n_lon_cells)
            lon_cells = [(c_lo + k) % self._n_lon_cells for k in range(span)]
        ilat_lo = math.floor(lat_lo / self._cell_lat_deg)
        ilat_hi = math.floor(lat_hi / self._cell_lat_deg)
        chunks = []
        for ilat in range(ilat_lo, ilat_hi + 1):
            for ilon in lon_cells:
                rows = self._cells.get((ilat, ilon))
                if rows is not None:
                    chunks.append(rows)
        if not chunks:
            return np.empty(0, dtype=np.intp)
        return np.concatenate(chunks)

    def _within(self, lat: float, lon: float, radius_m: float) -> np.ndarray:
        """Rows of all indexed points within radius_m of (lat, lon)."""
        cand = self._candidate_rows(lat, lon, radius_m)
        if cand.size == 0:
            return cand
        phi0 = math.radians(lat)
        lam0 = math.radians(lon)
        dphi = self._lat_rad[cand] - phi0
        dlam = self._lon_rad[cand] - lam0
        a = np.sin(dphi / 2.0) ** 2 + math.cos(phi0) * self._cos_lat[cand] * np.sin(dlam / 2.0) ** 2
        dist = 2.0 * EARTH_RADIUS_M * np.arcsin(np.minimum(1.0, np.sqrt(a)))
        return cand[dist <= radius_m]

    def neighbors_within(self, building_id: str, radius_m: float) -> set[str]:
        """Ids of indexed buildings within radius_m, excluding the building itself."""
        if radius_m <= 0:
            raise ValueError(f"radius must be positive, got {radius_m}")
        try:
            row = self._row[building_id]
        except KeyError:
            raise KeyError(f"building_id {building_id!r} is not indexed") from None
        rows = self._within(self._lat[row], self._lon[row], radius_m)
        return {self._ids[r] for r in rows if r != row}


def neighbor_features(
    index: NeighborIndex,
    labels: Mapping[str, RoofClass],
    building_id: str,
    radius_m: float,
) -> NeighborFeatures:
    """Gable and complexity ratios over the labeled neighbors of a building.

    Unlabeled neighbors never enter a denominator; with zero labeled
    neighbors both ratios are missing.
    """
    neighbors = index.neighbors_within(building_id, radius_m)
    labeled = [labels[n] for n in neighbors if n in labels]
    if not labeled:
        return NeighborFeatures(None, None, 0)
    n = len(labeled)
    gable = sum(1 for roof in labeled if is_gable(roof))
    complex_ = sum(1 for roof in labeled if is_complex(roof))
    return NeighborFeatures(gable / n, complex_ / n, n)


def neighbor_features_all(
    index: NeighborIndex,
    labels: Mapping[str, RoofClass],
    ids: Iterable[str],
    radius_m: float,
) -> dict[str, NeighborFeatures]:
    return {b: neighbor_features(index, labels, b, radius_m) for b in ids}


def predict_dominant_family(
    features: NeighborFeatures, tie: RoofFamily = RoofFamily.GABLE
) -> RoofFamily | None:
    """Majority-vote family predictor: hip only on a strict hip majority.

    Returns None (abstains) when the neighborhood has no labeled roofs.
    An exact 50/50 split resolves to ``tie``.
    """
    if features.type_ratio is None:
        return None
    hip_fraction = 1.0 - features.type_ratio
    if hip_fraction > 0.5:
        return RoofFamily.HIP
    if hip_fraction < 0.5:
        return RoofFamily.GABLE
    return tie


def radius_sweep(
    index: NeighborIndex,
    labels: Mapping[str, RoofClass],
    radii_m: Sequence[float],
    tie: RoofFamily = RoofFamily.GABLE,
) -> list[SweepPoint]:
    """Dominant-family baseline accuracy and abstention rate per radius.

    Accuracy is computed over buildings with at least one labeled
    neighbor; buildings whose neighborhood is empty count toward the
    missing fraction instead.
    """
    if not radii_m:
        raise ValueError("at least one radius is required")
    points = []
    ids = sorted(labels)
    for radius in radii_m:
        correct = 0
        evaluated = 0
        missing = 0
        for building_id in ids:
            nf = neighbor_features(index, labels, building_id, radius)
            predicted = predict_dominant_family(nf, tie=tie)
            if predicted is None:
                missing += 1
                continue
            evaluated += 1
            if predicted is to_features(labels[building_id]).family:
                correct += 1
        points.append(
            SweepPoint(
                radius_m=float(radius),
                accuracy=correct / evaluated if evaluated else 0.0,
                missing_fraction=missing / len(ids) if ids else 0.0,
                n_evaluated=evaluated,
            )
        )
    return points
