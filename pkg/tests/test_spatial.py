"""Haversine, radius-index exactness, and dominant-type baseline tests."""

import numpy as np
import pytest

from conftest import labeled, oracle_distance_m, oracle_neighbors
from roofinv.spatial import (
    METERS_PER_DEG_LAT,
    NeighborFeatures,
    NeighborIndex,
    haversine,
    neighbor_features,
    neighbor_features_all,
    predict_dominant_family,
    radius_sweep,
)
from roofinv.taxonomy import RoofClass, RoofFamily

DEG_PER_M = 1.0 / METERS_PER_DEG_LAT


def test_haversine_known_values():
    # 0.001 deg of latitude at the equator: 111194.92664... m/deg scaled down.
    assert haversine(0.0, 0.0, 0.001, 0.0) == pytest.approx(111.19492664455873, abs=1e-6)
    assert haversine(0.0, 0.0, 0.0, 0.001) == pytest.approx(111.19492664455873, abs=1e-6)
    assert haversine(12.3, -45.6, 12.3, -45.6) == 0.0


def test_haversine_is_symmetric_and_matches_oracle():
    rng = np.random.default_rng(7)
    for _ in range(200):
        lat1, lat2 = rng.uniform(-80, 80, size=2)
        lon1, lon2 = rng.uniform(-180, 180, size=2)
        d = haversine(lat1, lon1, lat2, lon2)
        assert d == pytest.approx(haversine(lat2, lon2, lat1, lon1), abs=1e-9)
        assert d == pytest.approx(oracle_distance_m(lat1, lon1, lat2, lon2), abs=1e-6)


def test_index_finds_sixty_meter_pair_at_80_but_not_50():
    sep = 60.0 * DEG_PER_M
    index = NeighborIndex([("a", 0.0, 0.0), ("b", 0.0, sep)])
    assert index.neighbors_within("a", 80.0) == {"b"}
    assert index.neighbors_within("b", 80.0) == {"a"}
    assert index.neighbors_within("a", 50.0) == set()


def test_index_excludes_self():
    index = NeighborIndex([("a", 0.0, 0.0), ("b", 0.0, 1e-7)])
    assert "a" not in index.neighbors_within("a", 100.0)


def test_index_radius_is_inclusive():
    sep = 80.0 * DEG_PER_M
    index = NeighborIndex([("a", 0.0, 0.0), ("b", 0.0, sep)])
    d = haversine(0.0, 0.0, 0.0, sep)
    assert index.neighbors_within("a", d) == {"b"}
    assert index.neighbors_within("a", np.nextafter(d, 0.0)) == set()


def test_index_handles_antimeridian_wrap():
    # 0.001 deg apart across the 180 meridian: about 111.2 m.
    index = NeighborIndex([("west", 0.0, 179.9995), ("east", 0.0, -179.9995)])
    assert index.neighbors_within("west", 120.0) == {"east"}
    assert index.neighbors_within("west", 100.0) == set()


def test_index_handles_high_latitude():
    # Longitude degrees shrink with cos(lat); 0.001 deg at 78 N is ~23 m.
    pts = [("a", 78.0, 0.0), ("b", 78.0, 0.001), ("c", 78.0, 0.01)]
    index = NeighborIndex(pts)
    assert index.neighbors_within("a", 30.0) == {"b"}
    got = index.neighbors_within("a", 300.0)
    assert got == oracle_neighbors(pts, 300.0)["a"]


def test_index_matches_oracle_on_random_points():
    rng = np.random.default_rng(42)
    lat0, lon0 = 35.0, -78.0
    span = 1500.0 * DEG_PER_M
    pts = [
        (f"b{i}", lat0 + rng.uniform(-span, span), lon0 + rng.uniform(-span, span))
        for i in range(300)
    ]
    index = NeighborIndex(pts)
    for radius in (50.0, 100.0, 200.0):
        expect = oracle_neighbors(pts, radius)
        for bid, _, _ in pts:
            assert index.neighbors_within(bid, radius) == expect[bid]


def test_index_results_do_not_depend_on_cell_size():
    rng = np.random.default_rng(3)
    span = 800.0 * DEG_PER_M
    pts = [(f"b{i}", rng.uniform(-span, span), rng.uniform(-span, span)) for i in range(120)]
    coarse = NeighborIndex(pts, cell_size_m=500.0)
    fine = NeighborIndex(pts, cell_size_m=40.0)
    for bid, _, _ in pts:
        assert coarse.neighbors_within(bid, 90.0) == fine.neighbors_within(bid, 90.0)


def test_index_error_paths():
    index = NeighborIndex([("a", 0.0, 0.0)])
    with pytest.raises(KeyError):
        index.neighbors_within("nope", 50.0)
    with pytest.raises(ValueError):
        index.neighbors_within("a", 0.0)
    with pytest.raises(ValueError):
        NeighborIndex([("a", 0.0, 0.0), ("a", 1.0, 1.0)])


def tight_cluster():
    step = 10.0 * DEG_PER_M
    records = [
        labeled("center", 0.0, 0.0, RoofClass.SIMPLE_GABLE),
        labeled("n1", step, 0.0, RoofClass.SIMPLE_GABLE),
        labeled("n2", 0.0, step, RoofClass.SIMPLE_HIP),
        labeled("n3", -step, 0.0, RoofClass.CROSS_HIP),
    ]
    index = NeighborIndex((r.building_id, r.latitude, r.longitude) for r in records)
    labels = {r.building_id: r.roof for r in records}
    return index, labels


def test_neighbor_features_ratios():
    index, labels = tight_cluster()
    nf = neighbor_features(index, labels, "center", 80.0)
    assert nf.neighbor_count == 3
    assert nf.type_ratio == pytest.approx(1 / 3)
    assert nf.complexity_ratio == pytest.approx(1 / 3)


def test_neighbor_features_ignore_unlabeled_neighbors():
    index, labels = tight_cluster()
    del labels["n3"]
    nf = neighbor_features(index, labels, "center", 80.0)
    assert nf.neighbor_count == 2
    assert nf.type_ratio == pytest.approx(0.5)


def test_neighbor_features_missing_when_no_labeled_neighbor():
    index, labels = tight_cluster()
    nf = neighbor_features(index, {}, "center", 80.0)
    assert nf == NeighborFeatures(None, None, 0)


def test_neighbor_features_all_covers_requested_ids():
    index, labels = tight_cluster()
    out = neighbor_features_all(index, labels, ["center", "n1"], 80.0)
    assert set(out) == {"center", "n1"}
    assert out["center"].neighbor_count == 3


def test_neighbor_features_validates_presence_pairing():
    with pytest.raises(ValueError):
        NeighborFeatures(0.5, None, 2)
    with pytest.raises(ValueError):
        NeighborFeatures(None, None, 2)


def test_dominant_family_prediction():
    hip_heavy = NeighborFeatures(1 / 3, 1 / 3, 3)
    gable_heavy = NeighborFeatures(2 / 3, 1 / 3, 3)
    split = NeighborFeatures(0.5, 0.5, 2)
    empty = NeighborFeatures(None, None, 0)
    assert predict_dominant_family(hip_heavy) is RoofFamily.HIP
    assert predict_dominant_family(gable_heavy) is RoofFamily.GABLE
    assert predict_dominant_family(split) is RoofFamily.GABLE
    assert predict_dominant_family(split, tie=RoofFamily.HIP) is RoofFamily.HIP
    assert predict_dominant_family(empty) is None


def sweep_city():
    g, h = RoofClass.SIMPLE_GABLE, RoofClass.SIMPLE_HIP
    step = 0.0002  # ~22 m of latitude
    records = [
        labeled("a1", 0.0, 0.0, g),
        labeled("a2", step, 0.0, g),
        labeled("a3", 0.0, step, g),
        labeled("h1", 0.02, 0.02, h),
        labeled("h2", 0.02 + step, 0.02, h),
        labeled("lone", 0.01, 0.0, g),
    ]
    index = NeighborIndex((r.building_id, r.latitude, r.longitude) for r in records)
    labels = {r.building_id: r.roof for r in records}
    return index, labels


def test_radius_sweep_exact_counts():
    index, labels = sweep_city()
    near, far = radius_sweep(index, labels, [50.0, 5000.0])
    # 50 m: "lone" has no labeled neighbor; everyone else votes inside a
    # pure cluster.
    assert near.n_evaluated == 5
    assert near.accuracy == 1.0
    assert near.missing_fraction == pytest.approx(1 / 6)
    # 5 km: everyone sees everyone; the two hips are outvoted 4 to 1.
    assert far.n_evaluated == 6
    assert far.accuracy == pytest.approx(4 / 6)
    assert far.missing_fraction == 0.0


def test_radius_sweep_missing_fraction_non_increasing():
    rng = np.random.default_rng(11)
    classes = [RoofClass.SIMPLE_GABLE, RoofClass.SIMPLE_HIP, RoofClass.CROSS_HIP]
    for _ in range(5):
        span = 600.0 * DEG_PER_M
        records = [
            labeled(
                f"b{i}",
                float(rng.uniform(-span, span)),
                float(rng.uniform(-span, span)),
                classes[int(rng.integers(0, 3))],
            )
            for i in range(80)
        ]
        index = NeighborIndex((r.building_id, r.latitude, r.longitude) for r in records)
        labels = {r.building_id: r.roof for r in records}
        points = radius_sweep(index, labels, [30.0, 60.0, 120.0, 240.0])
        fractions = [p.missing_fraction for p in points]
        assert fractions == sorted(fractions, reverse=True)


def test_radius_sweep_requires_radii():
    index, labels = sweep_city()
    with pytest.raises(ValueError):
        radius_sweep(index, labels, [])
