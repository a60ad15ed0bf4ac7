"""Per-building image crop geometry and acquisition plans.

The crop extent is derived from floor area so a roof fills a usable
share of the frame; the zoom level is the tightest Web Mercator zoom
whose ground coverage still contains that extent. Plans are pure data:
credentials never appear in them, and the same building always yields
the same request URI and cache key.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ValidationError
from .files import read_comments, read_csv_table, write_csv
from .records import BuildingRecord, Inventory

# 2 * pi * 6378137 / 256: meters per pixel at the equator, zoom 0
EQUATOR_RESOLUTION_M = 156543.03392804097
MERCATOR_LAT_LIMIT_DEG = 85.05113

ZOOM_MIN = 15
ZOOM_MAX = 21
IMAGE_SIZE_MIN = 224
IMAGE_SIZE_MAX = 1280

DEFAULT_CROP_FACTOR = 2.5
DEFAULT_MIN_EXTENT_M = 30.0
DEFAULT_MAX_EXTENT_M = 120.0

# .invalid TLD: a stand-in that can never resolve if fetched by accident.
DEFAULT_PROVIDER_TEMPLATE = (
    "https://staticmap.invalid/v1/map?center={lat},{lon}&zoom={zoom}&size={size}x{size}"
)

PLAN_COLUMNS = ("building_id", "lat", "lon", "zoom", "size_px", "cache_key")


def ground_resolution(latitude: float, zoom: int) -> float:
    """Meters per pixel of a Web Mercator tile pyramid at this latitude."""
    if not abs(latitude) < MERCATOR_LAT_LIMIT_DEG:
        raise ValueError(
            f"latitude {latitude} is at or beyond the Web Mercator cutoff "
            f"(|lat| < {MERCATOR_LAT_LIMIT_DEG})"
        )
    if zoom < 0:
        raise ValueError(f"zoom must be non-negative, got {zoom}")
    return EQUATOR_RESOLUTION_M * math.cos(math.radians(latitude)) / (2.0**zoom)


def crop_extent(
    building_area: float,
    factor: float = DEFAULT_CROP_FACTOR,
    min_extent_m: float = DEFAULT_MIN_EXTENT_M,
    max_extent_m: float = DEFAULT_MAX_EXTENT_M,
) -> float:
    """Side length in meters of the ground square the image must cover."""
    if building_area <= 0:
        raise ValueError(f"building_area must be positive, got {building_area}")
    return min(max(factor * math.sqrt(building_area), min_extent_m), max_extent_m)


@dataclass(frozen=True)
class ImagePlan:
    building_id: str
    center: tuple[float, float]  # (lat, lon) degrees
    zoom: int
    image_size_px: int
    ground_extent_m: float  # meters covered by the image side at this latitude
    request_uri: str
    cache_key: str

    def __post_init__(self) -> None:
        if not ZOOM_MIN <= self.zoom <= ZOOM_MAX:
            raise ValueError(f"zoom {self.zoom} outside [{ZOOM_MIN}, {ZOOM_MAX}]")
        if not IMAGE_SIZE_MIN <= self.image_size_px <= IMAGE_SIZE_MAX:
            raise ValueError(
                f"image_size_px {self.image_size_px} outside "
                f"[{IMAGE_SIZE_MIN}, {IMAGE_SIZE_MAX}]"
            )


def cache_key(provider: str, lat: float, lon: float, zoom: int, size: int) -> str:
    """Stable content hash; centers within 1e-6 deg share a key."""
    token = f"{provider}|{lat:.6f}|{lon:.6f}|{zoom}|{size}"
    return hashlib.sha256(token.encode("utf-8")).hexdigest()


def request_uri(provider: str, lat: float, lon: float, zoom: int, size: int) -> str:
    return provider.format(lat=f"{lat:.6f}", lon=f"{lon:.6f}", zoom=zoom, size=size)


def plan_image(
    b: BuildingRecord,
    image_size_px: int = IMAGE_SIZE_MIN,
    provider: str = DEFAULT_PROVIDER_TEMPLATE,
    crop_factor: float = DEFAULT_CROP_FACTOR,
    min_extent_m: float = DEFAULT_MIN_EXTENT_M,
    max_extent_m: float = DEFAULT_MAX_EXTENT_M,
) -> ImagePlan:
    """Choose the largest zoom whose coverage still contains the crop.

    Coverage shrinks as zoom grows, so the search walks down from the
    maximum; if even the minimum zoom cannot cover (only possible at
    extreme latitudes) the minimum is used as the best available.
    """
    lat, lon = b.centroid
    extent = crop_extent(b.building_area, crop_factor, min_extent_m, max_extent_m)
    zoom = ZOOM_MIN
    for z in range(ZOOM_MAX, ZOOM_MIN - 1, -1):
        if ground_resolution(lat, z) * image_size_px >= extent:
            zoom = z
            break
    return ImagePlan(
        building_id=b.building_id,
        center=(lat, lon),
        zoom=zoom,
        image_size_px=image_size_px,
        ground_extent_m=ground_resolution(lat, zoom) * image_size_px,
        request_uri=request_uri(provider, lat, lon, zoom, image_size_px),
        cache_key=cache_key(provider, lat, lon, zoom, image_size_px),
    )


def plan_inventory(
    inventory: Inventory,
    image_size_px: int = IMAGE_SIZE_MIN,
    provider: str = DEFAULT_PROVIDER_TEMPLATE,
    crop_factor: float = DEFAULT_CROP_FACTOR,
    min_extent_m: float = DEFAULT_MIN_EXTENT_M,
    max_extent_m: float = DEFAULT_MAX_EXTENT_M,
) -> list[ImagePlan]:
    return [
        plan_image(b, image_size_px, provider, crop_factor, min_extent_m, max_extent_m)
        for b in inventory
    ]


def write_plan_manifest(
    plans: Sequence[ImagePlan],
    path: str | Path,
    provider: str = DEFAULT_PROVIDER_TEMPLATE,
    comments: Sequence[str] = (),
) -> None:
    # The provider template rides along as a comment so the manifest is
    # self-contained enough to reconstruct request URIs at fetch time.
    rows = [
        [p.building_id, repr(p.center[0]), repr(p.center[1]), p.zoom,
         p.image_size_px, p.cache_key]
        for p in plans
    ]
    write_csv(path, PLAN_COLUMNS, rows, [*comments, f"provider={provider}"])


def read_plan_manifest(path: str | Path) -> tuple[list[ImagePlan], str]:
    """Rebuild plans from a manifest, re-deriving and checking cache keys."""
    provider = DEFAULT_PROVIDER_TEMPLATE
    for comment in read_comments(path):
        if comment.startswith("provider="):
            provider = comment.partition("=")[2]
    header, rows = read_csv_table(path)
    if tuple(header) != PLAN_COLUMNS:
        raise ValidationError(
            f"{path}: unexpected header {header!r}; expected {','.join(PLAN_COLUMNS)}"
        )
    plans = []
    for line, row in rows:
        if len(row) != len(PLAN_COLUMNS):
            raise ValidationError(f"{path}: line {line}: wrong field count")
        try:
            building_id = row[0]
            lat, lon = float(row[1]), float(row[2])
            zoom, size = int(row[3]), int(row[4])
        except ValueError:
            raise ValidationError(f"{path}: line {line}: unparseable plan row") from None
        key = cache_key(provider, lat, lon, zoom, size)
        if key != row[5]:
            raise ValidationError(
                f"{path}: line {line}: cache_key does not match plan parameters"
            )
        plans.append(
            ImagePlan(
                building_id=building_id,
                center=(lat, lon),
                zoom=zoom,
                image_size_px=size,
                ground_extent_m=ground_resolution(lat, zoom) * size,
                request_uri=request_uri(provider, lat, lon, zoom, size),
                cache_key=key,
            )
        )
    return plans, provider


def plans_cover_extents(plans: Iterable[ImagePlan], records: Iterable[BuildingRecord],
                        crop_factor: float = DEFAULT_CROP_FACTOR,
                        min_extent_m: float = DEFAULT_MIN_EXTENT_M,
                        max_extent_m: float = DEFAULT_MAX_EXTENT_M) -> bool:
    by_id = {b.building_id: b for b in records}
    for plan in plans:
        b = by_id[plan.building_id]
        extent = crop_extent(b.building_area, crop_factor, min_extent_m, max_extent_m)
        if plan.ground_extent_m < extent:
            return False
    return True
