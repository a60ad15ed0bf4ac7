"""Tests for the synthetic city generator."""

import math

import pytest

from roofinv.errors import ValidationError
from roofinv.records import RoofSource
from roofinv.spatial import METERS_PER_DEG_LAT
from roofinv.synth import (
    SYNTH_MODEL_ID,
    SynthConfig,
    family_accuracy_bound,
    generate,
    truth_labels,
)
from roofinv.taxonomy import CLASS_ORDER, RoofClass, RoofFamily, is_complex, to_features


def small_city(**overrides):
    base = dict(seed=7, n_clusters=40, buildings_per_cluster=50)
    base.update(overrides)
    return SynthConfig(**base)


@pytest.mark.parametrize(
    "overrides",
    [
        dict(n_clusters=0),
        dict(buildings_per_cluster=0),
        dict(cluster_spacing_m=0.0),
        dict(intra_spacing_m=-1.0),
        dict(cluster_purity=0.4),
        dict(cluster_purity=1.1),
        dict(occlusion_rate=1.0),
        dict(occlusion_rate=-0.1),
        dict(hip_boost=1.0),
        dict(base_lat=80.0),
        dict(base_lat=-85.0),
        dict(runt_clusters=5, n_clusters=4),
        dict(runt_size=0),
    ],
)
def test_config_rejects_bad_values(overrides):
    with pytest.raises(ValueError):
        SynthConfig(**overrides)


def test_config_file_round_trip(tmp_path):
    cfg = SynthConfig(
        seed=11,
        n_clusters=6,
        buildings_per_cluster=12,
        cluster_purity=0.85,
        occlusion_rate=0.1,
        hip_boost=0.25,
        runt_clusters=2,
        runt_size=3,
    )
    path = tmp_path / "synth.cfg"
    path.write_text("\n".join(cfg.to_lines()) + "\n")
    assert SynthConfig.from_file(path) == cfg


def test_config_file_rejects_unknown_key(tmp_path):
    path = tmp_path / "synth.cfg"
    path.write_text("seed=1\nwidth=4\n")
    with pytest.raises(ValidationError, match="unknown synth config key"):
        SynthConfig.from_file(path)


def test_config_file_rejects_bad_value(tmp_path):
    path = tmp_path / "synth.cfg"
    path.write_text("n_clusters=many\n")
    with pytest.raises(ValidationError, match="bad value for n_clusters"):
        SynthConfig.from_file(path)


def test_config_file_reports_constraint_violations(tmp_path):
    path = tmp_path / "synth.cfg"
    path.write_text("cluster_purity=0.2\n")
    with pytest.raises(ValidationError, match="cluster_purity"):
        SynthConfig.from_file(path)


def test_generate_is_deterministic():
    cfg = small_city(n_clusters=5, buildings_per_cluster=8, occlusion_rate=0.2)
    first = generate(cfg)
    second = generate(cfg)
    assert first.buildings.records == second.buildings.records
    assert first.truth.records == second.truth.records
    assert first.predictions == second.predictions
    assert first.tracts_geojson == second.tracts_geojson
    third = generate(small_city(n_clusters=5, buildings_per_cluster=8, seed=8, occlusion_rate=0.2))
    assert third.truth.records != first.truth.records


def test_city_shape_and_ids():
    cfg = small_city(n_clusters=6, buildings_per_cluster=9)
    result = generate(cfg)
    assert len(result.buildings) == 54
    assert len(result.truth) == 54
    assert len(result.predictions) == 54
    ids = [record.building_id for record in result.buildings]
    assert ids[0] == "b000001"
    assert ids[-1] == "b000054"
    assert set(result.cluster_of) == set(ids)
    tract_ids = sorted(set(result.cluster_of.values()))
    assert tract_ids == [f"tract-{c:04d}" for c in range(1, 7)]
    counts = {tid: 0 for tid in tract_ids}
    for tid in result.cluster_of.values():
        counts[tid] += 1
    assert all(n == 9 for n in counts.values())


def test_blank_and_truth_inventories_align():
    result = generate(small_city(n_clusters=4, buildings_per_cluster=6))
    for blank in result.buildings:
        assert blank.roof is None
        assert blank.roof_source is RoofSource.ABSENT
        assert blank.tract_id is None
        truth = result.truth.records[blank.building_id]
        assert truth.roof in set(CLASS_ORDER) - {RoofClass.UNKNOWN}
        assert truth.roof_source is RoofSource.LABELED_TRUTH
        assert truth.latitude == blank.latitude
        assert truth.longitude == blank.longitude
        assert truth.year_built == blank.year_built
        assert truth.building_area == blank.building_area
        assert 1950 <= truth.year_built <= 2020


def test_cluster_purity_controls_family_agreement():
    cfg = small_city(cluster_purity=0.9)
    result = generate(cfg)
    labels = truth_labels(result)
    by_cluster: dict[str, list[RoofClass]] = {}
    for building_id, cls in labels.items():
        by_cluster.setdefault(result.cluster_of[building_id], []).append(cls)

    hits = 0
    total = 0
    for classes in by_cluster.values():
        # Deviations flip family only, so every cluster is pure in
        # complexity.
        complexities = {to_features(cls).complexity for cls in classes}
        assert len(complexities) == 1
        families = [to_features(cls).family for cls in classes]
        majority = max(set(families), key=families.count)
        hits += sum(1 for fam in families if fam is majority)
        total += len(families)
    assert hits / total == pytest.approx(0.9, abs=0.02)
    assert family_accuracy_bound(cfg) == 0.9


def test_occlusion_rate_drives_unknown_predictions():
    cfg = small_city(occlusion_rate=0.25)
    result = generate(cfg)
    labels = truth_labels(result)
    unknown_idx = CLASS_ORDER.index(RoofClass.UNKNOWN)
    n_unknown = 0
    for pred in result.predictions:
        assert pred.model_id == SYNTH_MODEL_ID
        top = max(range(len(pred.scores)), key=lambda i: pred.scores[i])
        if top == unknown_idx:
            n_unknown += 1
        else:
            assert CLASS_ORDER[top] is labels[pred.building_id]
    rate = n_unknown / len(result.predictions)
    assert rate == pytest.approx(0.25, abs=0.03)


def test_zero_occlusion_predictions_match_truth():
    result = generate(small_city(n_clusters=5, buildings_per_cluster=10))
    labels = truth_labels(result)
    for pred in result.predictions:
        top = max(range(len(pred.scores)), key=lambda i: pred.scores[i])
        assert CLASS_ORDER[top] is labels[pred.building_id]


def test_hip_boost_ties_family_to_year_threshold():
    cfg = small_city(hip_boost=0.6, year_threshold=1985)
    result = generate(cfg)
    labels = truth_labels(result)
    hip_by_side = {True: [0, 0], False: [0, 0]}  # late? -> [hips, total]
    for record in result.truth:
        late = record.year_built >= cfg.year_threshold
        family = to_features(labels[record.building_id]).family
        hip_by_side[late][0] += int(family is RoofFamily.HIP)
        hip_by_side[late][1] += 1
    late_rate = hip_by_side[True][0] / hip_by_side[True][1]
    early_rate = hip_by_side[False][0] / hip_by_side[False][1]
    # The override fires with probability hip_boost and then the year
    # side fixes the family, so the rate gap estimates hip_boost.
    assert late_rate - early_rate == pytest.approx(0.6, abs=0.08)

    # The override rewrites family only; complexity stays cluster-pure.
    by_cluster: dict[str, set] = {}
    for building_id, cls in labels.items():
        tract = result.cluster_of[building_id]
        by_cluster.setdefault(tract, set()).add(to_features(cls).complexity)
    assert all(len(found) == 1 for found in by_cluster.values())


def test_complex_roofs_carry_area_bonus():
    result = generate(small_city())
    simple_areas = []
    complex_areas = []
    for record in result.truth:
        if is_complex(record.roof):
            complex_areas.append(record.building_area)
        else:
            simple_areas.append(record.building_area)
    assert simple_areas and complex_areas
    assert all(90.0 <= a <= 240.0 for a in simple_areas)
    assert all(120.0 <= a <= 360.0 for a in complex_areas)
    mean_gap = sum(complex_areas) / len(complex_areas) - sum(simple_areas) / len(simple_areas)
    assert mean_gap > 40.0


def test_runt_clusters_are_truncated():
    cfg = small_city(n_clusters=8, buildings_per_cluster=20, runt_clusters=3, runt_size=4)
    result = generate(cfg)
    assert len(result.buildings) == 3 * 4 + 5 * 20
    counts: dict[str, int] = {}
    for tract in result.cluster_of.values():
        counts[tract] = counts.get(tract, 0) + 1
    for c in range(1, 9):
        expected = 4 if c <= 3 else 20
        assert counts[f"tract-{c:04d}"] == expected


def test_tract_rectangles_contain_their_buildings():
    cfg = small_city(n_clusters=9, buildings_per_cluster=15)
    result = generate(cfg)
    bounds = {}
    for feature in result.tracts_geojson["features"]:
        assert feature["geometry"]["type"] == "Polygon"
        ring = feature["geometry"]["coordinates"][0]
        assert len(ring) == 5
        assert ring[0] == ring[-1]
        lons = [pt[0] for pt in ring]
        lats = [pt[1] for pt in ring]
        bounds[feature["properties"]["tract_id"]] = (
            min(lons), max(lons), min(lats), max(lats)
        )
    assert len(bounds) == 9
    pad_lat = 15.0 / METERS_PER_DEG_LAT
    for record in result.buildings:
        lon_min, lon_max, lat_min, lat_max = bounds[result.cluster_of[record.building_id]]
        assert lon_min < record.longitude < lon_max
        assert lat_min < record.latitude < lat_max
        # The pad keeps buildings strictly interior, not on the edge.
        assert record.latitude - lat_min > pad_lat / 2.0
        assert lat_max - record.latitude > pad_lat / 2.0


def test_clusters_are_spatially_separated():
    cfg = small_city(n_clusters=4, buildings_per_cluster=9, cluster_spacing_m=400.0)
    result = generate(cfg)
    centroids: dict[str, list] = {}
    for record in result.buildings:
        centroids.setdefault(result.cluster_of[record.building_id], []).append(
            (record.latitude, record.longitude)
        )
    centers = []
    for points in centroids.values():
        lat = sum(p[0] for p in points) / len(points)
        lon = sum(p[1] for p in points) / len(points)
        centers.append((lat, lon))
    m_per_deg_lon = METERS_PER_DEG_LAT * math.cos(math.radians(cfg.base_lat))
    for i in range(len(centers)):
        for j in range(i + 1, len(centers)):
            dy = (centers[i][0] - centers[j][0]) * METERS_PER_DEG_LAT
            dx = (centers[i][1] - centers[j][1]) * m_per_deg_lon
            assert math.hypot(dx, dy) > 300.0
