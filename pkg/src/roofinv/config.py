"""Pipeline configuration and run-manifest stamping.

Every stage derives a manifest hash from what actually determines its
output — stage name, tool version, seed, parameters, and input-file
digests — never from clock time or output paths. Identical inputs and
config therefore reproduce identical stamps, which is what makes stage
re-runs byte-idempotent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Mapping

from . import __version__
from .errors import ValidationError
from .files import parse_keyvalue, read_text, sha256_bytes, sha256_file

DEFAULT_RADIUS_M = 80.0
DEFAULT_SWEEP_RADII = (50.0, 80.0, 100.0, 150.0)


@dataclass(frozen=True)
class PipelineConfig:
    """Shared knobs; subcommand flags override file values."""

    seed: int = 0
    radius_m: float = DEFAULT_RADIUS_M
    sweep_radii: tuple[float, ...] = DEFAULT_SWEEP_RADII
    area_unit: str = "sqm"
    study_area: str = "study-area"
    model_kind: str = "forest"
    # forest
    n_trees: int = 100
    min_leaf: int = 5
    bootstrap_fraction: float = 1.0
    n_jobs: int = 4
    # margin
    epochs: int = 50
    lambda_l2: float = 1e-4
    learning_rate: float = 0.1
    # evaluation protocol
    cv_folds: int = 10
    holdout_fraction: float = 0.25
    importance_repeats: int = 10
    # imagery
    image_size_px: int = 224
    crop_factor: float = 2.5
    min_extent_m: float = 30.0
    max_extent_m: float = 120.0
    rate_per_s: float = 10.0
    burst: int = 10
    parallel_fetch: int = 8
    max_retries: int = 3

    def __post_init__(self) -> None:
        if self.area_unit not in ("sqm", "sqft"):
            raise ValueError(f"area_unit must be sqm or sqft, got {self.area_unit!r}")
        if self.model_kind not in ("forest", "margin"):
            raise ValueError(f"model_kind must be forest or margin, got {self.model_kind!r}")
        if self.radius_m <= 0 or not self.sweep_radii:
            raise ValueError("radius_m must be positive and sweep_radii non-empty")

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        return cls.from_mapping(parse_keyvalue(read_text(path).splitlines()), str(path))

    @classmethod
    def from_mapping(cls, raw: Mapping[str, str], source: str = "config") -> "PipelineConfig":
        kwargs: dict[str, object] = {}
        types = {f.name: f.type for f in fields(cls)}
        for key, value in raw.items():
            if key not in types:
                raise ValidationError(f"{source}: unknown config key {key!r}")
            try:
                if key == "sweep_radii":
                    kwargs[key] = tuple(float(v) for v in value.split(",") if v.strip())
                elif types[key] == "int":
                    kwargs[key] = int(value)
                elif types[key] == "float":
                    kwargs[key] = float(value)
                else:
                    kwargs[key] = value
            except ValueError:
                raise ValidationError(f"{source}: bad value for {key}: {value!r}") from None
        try:
            return cls(**kwargs)
        except ValueError as exc:
            raise ValidationError(f"{source}: {exc}") from None


def manifest_hash(stage: str, seed: int, params: Mapping[str, object],
                  inputs: Mapping[str, str]) -> str:
    canonical = json.dumps(
        {
            "stage": stage,
            "tool_version": __version__,
            "seed": seed,
            "params": dict(params),
            "inputs": dict(inputs),
        },
        sort_keys=True,
        separators=(",", ":"),
    )
    return sha256_bytes(canonical.encode("utf-8"))


def input_digests(paths: Mapping[str, str | Path | None]) -> dict[str, str]:
    return {name: sha256_file(p) for name, p in sorted(paths.items()) if p is not None}


def write_stage_manifest(
    out_dir: str | Path,
    stage: str,
    seed: int,
    params: Mapping[str, object],
    inputs: Mapping[str, str],
) -> str:
    """Write ``<stage>.manifest.json`` and return the manifest hash."""
    digest = manifest_hash(stage, seed, params, inputs)
    doc = {
        "stage": stage,
        "tool_version": __version__,
        "seed": seed,
        "params": dict(params),
        "inputs": dict(inputs),
        "manifest_hash": digest,
    }
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{stage}.manifest.json").write_text(
        json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return digest
