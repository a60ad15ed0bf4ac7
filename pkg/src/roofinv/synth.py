"""Synthetic city generator: ground truth for the statistical tests.

Cities are clusters of buildings on a jittered grid. Each cluster draws
a dominant roof class; a building deviates from it with probability
1 - purity, and a deviation always flips the roof family (complexity is
kept), so the family purity of a cluster is the configured purity
exactly. An optional covariate rule reassigns the family from a
year-built threshold, giving imputation models a second real signal.

Generation is single-threaded and draw-order stable: one seeded
generator, consumed in a fixed order, makes outputs byte-identical
under the same config.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .files import parse_keyvalue, read_text
from .predictions import PredictionRecord, peaked_scores
from .records import BuildingRecord, Inventory, RoofSource
from .spatial import METERS_PER_DEG_LAT
from .taxonomy import (
    VALID_CLASSES,
    RoofClass,
    RoofFamily,
    RoofFeatures,
    from_features,
    is_complex,
    to_features,
)

SYNTH_MODEL_ID = "synth-oracle-v1"


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_clusters: int = 100
    buildings_per_cluster: int = 50
    cluster_spacing_m: float = 400.0
    intra_spacing_m: float = 20.0
    cluster_purity: float = 0.9
    occlusion_rate: float = 0.0
    year_threshold: int = 1985
    hip_boost: float = 0.0  # probability the year rule overrides the cluster draw
    base_lat: float = 35.0
    base_lon: float = -78.0
    runt_clusters: int = 0  # leading clusters truncated to runt_size buildings
    runt_size: int = 5

    def __post_init__(self) -> None:
        if self.n_clusters < 1 or self.buildings_per_cluster < 1:
            raise ValueError("cluster counts must be at least 1")
        if self.cluster_spacing_m <= 0 or self.intra_spacing_m <= 0:
            raise ValueError("spacings must be positive")
        if not 0.5 <= self.cluster_purity <= 1.0:
            raise ValueError("cluster_purity must be in [0.5, 1]")
        if not 0.0 <= self.occlusion_rate < 1.0:
            raise ValueError("occlusion_rate must be in [0, 1)")
        if not 0.0 <= self.hip_boost < 1.0:
            raise ValueError("hip_boost must be in [0, 1)")
        if not abs(self.base_lat) < 80.0:
            raise ValueError("base_lat must stay well clear of the poles")
        if not 0 <= self.runt_clusters <= self.n_clusters:
            raise ValueError("runt_clusters must be within the cluster count")
        if self.runt_size < 1:
            raise ValueError("runt_size must be at least 1")

    @classmethod
    def from_file(cls, path: str | Path) -> "SynthConfig":
        raw = parse_keyvalue(read_text(path).splitlines())
        kwargs: dict[str, object] = {}
        types = {f.name: f.type for f in fields(cls)}
        for key, value in raw.items():
            if key not in types:
                raise ValidationError(f"{path}: unknown synth config key {key!r}")
            kind = types[key]
            try:
                kwargs[key] = int(value) if kind == "int" else float(value)
            except ValueError:
                raise ValidationError(f"{path}: bad value for {key}: {value!r}") from None
        try:
            return cls(**kwargs)
        except ValueError as exc:
            raise ValidationError(f"{path}: {exc}") from None

    def to_lines(self) -> list[str]:
        return [f"{f.name}={getattr(self, f.name)}" for f in fields(self)]


def _flip_family(cls: RoofClass) -> RoofClass:
    features = to_features(cls)
    family = RoofFamily.GABLE if features.family is RoofFamily.HIP else RoofFamily.HIP
    return from_features(RoofFeatures(family, features.complexity))


@dataclass(frozen=True)
class SynthResult:
    buildings: Inventory  # roofs absent, tracts unassigned
    truth: Inventory  # same buildings with labeled-truth roofs
    predictions: list[PredictionRecord]
    tracts_geojson: dict
    cluster_of: dict[str, str]  # building_id -> tract_id


def generate(cfg: SynthConfig) -> SynthResult:
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    m_per_deg_lon = METERS_PER_DEG_LAT * math.cos(math.radians(cfg.base_lat))
    jitter = cfg.intra_spacing_m / 4.0
    grid_cols = math.ceil(math.sqrt(cfg.n_clusters))

    blank_records: list[BuildingRecord] = []
    truth_records: list[BuildingRecord] = []
    predictions: list[PredictionRecord] = []
    cluster_of: dict[str, str] = {}
    tract_features: list[dict] = []
    serial = 0

    for c in range(cfg.n_clusters):
        tract_id = f"tract-{c + 1:04d}"
        center_x = (c % grid_cols) * cfg.cluster_spacing_m
        center_y = (c // grid_cols) * cfg.cluster_spacing_m
        dominant = VALID_CLASSES[int(rng.integers(0, len(VALID_CLASSES)))]
        n_buildings = cfg.runt_size if c < cfg.runt_clusters else cfg.buildings_per_cluster
        b_cols = math.ceil(math.sqrt(n_buildings))
        lat_min = lat_max = lon_min = lon_max = None

        for b in range(n_buildings):
            serial += 1
            building_id = f"b{serial:06d}"
            x = center_x + ((b % b_cols) - (b_cols - 1) / 2.0) * cfg.intra_spacing_m
            y = center_y + ((b // b_cols) - (b_cols - 1) / 2.0) * cfg.intra_spacing_m
            x += rng.uniform(-jitter, jitter)
            y += rng.uniform(-jitter, jitter)
            lat = cfg.base_lat + y / METERS_PER_DEG_LAT
            lon = cfg.base_lon + x / m_per_deg_lon
            lat_min = lat if lat_min is None else min(lat_min, lat)
            lat_max = lat if lat_max is None else max(lat_max, lat)
            lon_min = lon if lon_min is None else min(lon_min, lon)
            lon_max = lon if lon_max is None else max(lon_max, lon)

            year = int(rng.integers(1950, 2021))
            cls = dominant if rng.random() < cfg.cluster_purity else _flip_family(dominant)
            if rng.random() < cfg.hip_boost:
                family = RoofFamily.HIP if year >= cfg.year_threshold else RoofFamily.GABLE
                cls = from_features(RoofFeatures(family, to_features(cls).complexity))
            base_area = rng.uniform(90.0, 240.0)
            bonus = rng.uniform(30.0, 120.0)
            area = base_area + (bonus if is_complex(cls) else 0.0)
            value = area * rng.uniform(900.0, 1500.0)
            stories = 2 if rng.random() < 0.3 else 1
            occluded = rng.random() < cfg.occlusion_rate

            common = dict(
                building_id=building_id,
                latitude=lat,
                longitude=lon,
                year_built=year,
                building_area=area,
                building_value=value,
                stories=stories,
                tract_id=None,
            )
            blank_records.append(BuildingRecord(**common))
            truth_records.append(
                BuildingRecord(**common, roof=cls, roof_source=RoofSource.LABELED_TRUTH)
            )
            scored = RoofClass.UNKNOWN if occluded else cls
            predictions.append(
                PredictionRecord(building_id, peaked_scores(scored), SYNTH_MODEL_ID)
            )
            cluster_of[building_id] = tract_id

        pad_lat = 15.0 / METERS_PER_DEG_LAT
        pad_lon = 15.0 / m_per_deg_lon
        ring = [
            [lon_min - pad_lon, lat_min - pad_lat],
            [lon_max + pad_lon, lat_min - pad_lat],
            [lon_max + pad_lon, lat_max + pad_lat],
            [lon_min - pad_lon, lat_max + pad_lat],
            [lon_min - pad_lon, lat_min - pad_lat],
        ]
        tract_features.append(
            {
                "type": "Feature",
                "geometry": {"type": "Polygon", "coordinates": [ring]},
                "properties": {"tract_id": tract_id},
            }
        )

    tracts_geojson = {"type": "FeatureCollection", "features": tract_features}
    return SynthResult(
        buildings=Inventory.from_records(blank_records, source="synth"),
        truth=Inventory.from_records(truth_records, source="synth"),
        predictions=predictions,
        tracts_geojson=tracts_geojson,
        cluster_of=cluster_of,
    )


def truth_labels(result: SynthResult) -> dict[str, RoofClass]:
    return result.truth.labeled(RoofSource.LABELED_TRUTH)


def family_accuracy_bound(cfg: SynthConfig) -> float:
    """The generator-forced dominant-family hit rate (cluster purity)."""
    return cfg.cluster_purity
