"""Command-line pipeline: every stage is a subcommand talking via files.

Stages share no hidden state — each reads documented input files,
writes documented output files stamped with a run-manifest hash, and
can be re-run independently. Logs go to standard error; data never
does.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import urllib.request
from pathlib import Path

from . import __version__, aggregate, imagery, imputation, spatial, synth
from .config import PipelineConfig, input_digests, write_stage_manifest
from .errors import InvariantError, MissingInputError, RoofInvError, ValidationError
from .evaluation import confusion, format_metrics_table, metrics, metrics_rows
from .fetch import (
    PROVIDER_KEY_ENV,
    DiskCache,
    FetchLimits,
    execute_fetch,
    stub_fetcher,
)
from .files import write_csv
from .ingest import (
    load_inventory,
    parse_buildings,
    parse_tracts,
    assign_tracts,
    write_inventory,
    write_rejections,
)
from .models import ForestConfig, MarginConfig
from .predictions import (
    align_labels,
    apply_predictions,
    parse_predictions,
    write_predictions,
)
from .records import RoofSource
from .taxonomy import CLASS_ORDER

LOG_FORMAT = "level=%(levelname)s stage=%(name)s msg=%(message)s"

LABEL_SOURCES = (RoofSource.CLASSIFIED, RoofSource.LABELED_TRUTH)


def _log(stage: str) -> logging.Logger:
    return logging.getLogger(stage)


def _stamp(digest: str) -> list[str]:
    return [f"manifest: {digest}"]


def _write_json(document: dict, digest: str, path: Path) -> None:
    document = {"manifest": digest, **document}
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(document, sort_keys=True) + "\n", encoding="utf-8")


def _config_from(args: argparse.Namespace) -> PipelineConfig:
    cfg = (
        PipelineConfig.from_file(args.config)
        if getattr(args, "config", None)
        else PipelineConfig()
    )
    overrides = {}
    for field in dataclasses.fields(PipelineConfig):
        value = getattr(args, field.name, None)
        if value is not None:
            overrides[field.name] = value
    if "sweep_radii" in overrides:
        overrides["sweep_radii"] = tuple(
            float(v) for v in str(overrides["sweep_radii"]).split(",") if v.strip()
        )
    try:
        return dataclasses.replace(cfg, **overrides) if overrides else cfg
    except ValueError as exc:
        raise ValidationError(str(exc)) from None


def _forest_config(cfg: PipelineConfig) -> ForestConfig:
    return ForestConfig(
        n_trees=cfg.n_trees,
        min_leaf=cfg.min_leaf,
        bootstrap_fraction=cfg.bootstrap_fraction,
        n_jobs=cfg.n_jobs,
    )


def _margin_config(cfg: PipelineConfig) -> MarginConfig:
    return MarginConfig(
        epochs=cfg.epochs, lambda_l2=cfg.lambda_l2, learning_rate=cfg.learning_rate
    )


# ---------------------------------------------------------------------------
# Stage implementations (shared by subcommands and run-all)


def stage_ingest(cfg: PipelineConfig, buildings: Path, tracts: Path | None,
                 out: Path) -> Path:
    log = _log("ingest")
    inventory, rejections = parse_buildings(buildings, area_unit=cfg.area_unit)
    n_tracts = 0
    tract_problems = 0
    if tracts is not None:
        polygons, feature_rejections = parse_tracts(tracts)
        n_tracts = len(polygons)
        tract_problems = len(feature_rejections)
        for rej in feature_rejections:
            log.warning("tract feature %d rejected: %s", rej.feature_index, rej.reason)
        inventory = assign_tracts(inventory, polygons)
    digest = write_stage_manifest(
        out, "ingest", cfg.seed,
        {"area_unit": cfg.area_unit, "n_tract_polygons": n_tracts},
        input_digests({"buildings": buildings, "tracts": tracts}),
    )
    inventory_path = out / "inventory.csv"
    write_inventory(inventory, inventory_path, comments=_stamp(digest))
    write_rejections(rejections, out / "rejections.csv", comments=_stamp(digest))
    log.info(
        "rows=%d accepted=%d rejected=%d tract_polygons=%d tract_rejects=%d",
        inventory.n_source_rows, len(inventory), len(rejections), n_tracts,
        tract_problems,
    )
    return inventory_path


def stage_plan_imagery(cfg: PipelineConfig, inventory_path: Path, out: Path,
                       provider: str) -> Path:
    log = _log("plan-imagery")
    inventory = load_inventory(inventory_path)
    plans = imagery.plan_inventory(
        inventory, cfg.image_size_px, provider,
        cfg.crop_factor, cfg.min_extent_m, cfg.max_extent_m,
    )
    digest = write_stage_manifest(
        out, "plan-imagery", cfg.seed,
        {
            "image_size_px": cfg.image_size_px,
            "crop_factor": cfg.crop_factor,
            "min_extent_m": cfg.min_extent_m,
            "max_extent_m": cfg.max_extent_m,
            "provider": provider,
        },
        input_digests({"inventory": inventory_path}),
    )
    plan_path = out / "image_plan.csv"
    imagery.write_plan_manifest(plans, plan_path, provider, comments=_stamp(digest))
    log.info("plans=%d", len(plans))
    return plan_path


def _http_fetcher(plan: imagery.ImagePlan) -> bytes:
    uri = plan.request_uri
    key = os.environ.get(PROVIDER_KEY_ENV)
    if key:
        uri += ("&" if "?" in uri else "?") + "key=" + key
    with urllib.request.urlopen(uri, timeout=30) as response:
        return response.read()


def stage_fetch(cfg: PipelineConfig, plan_path: Path, cache_dir: Path, out: Path,
                use_stub: bool) -> Path:
    log = _log("fetch")
    plans, _provider = imagery.read_plan_manifest(plan_path)
    limits = FetchLimits(
        rate_per_s=cfg.rate_per_s,
        burst=cfg.burst,
        parallelism=cfg.parallel_fetch,
        max_retries=cfg.max_retries,
    )
    fetcher = stub_fetcher if use_stub else _http_fetcher
    outcomes = execute_fetch(plans, fetcher, DiskCache(cache_dir), limits)
    digest = write_stage_manifest(
        out, "fetch", cfg.seed,
        {
            "rate_per_s": cfg.rate_per_s,
            "burst": cfg.burst,
            "parallelism": cfg.parallel_fetch,
            "max_retries": cfg.max_retries,
            "stub": use_stub,
        },
        input_digests({"plan": plan_path}),
    )
    report_path = out / "fetch_report.csv"
    write_csv(
        report_path,
        ("building_id", "status", "retry_count", "bytes", "reason"),
        [
            [o.building_id, o.status.value, o.retry_count,
             len(o.payload) if o.payload else 0, o.reason or ""]
            for o in outcomes
        ],
        comments=_stamp(digest),
    )
    counts = {status: 0 for status in ("fetched", "cached", "failed")}
    for o in outcomes:
        counts[o.status.value] += 1
    log.info("fetched=%d cached=%d failed=%d", counts["fetched"], counts["cached"],
             counts["failed"])
    return report_path


def stage_apply_predictions(cfg: PipelineConfig, inventory_path: Path,
                            predictions_path: Path, out: Path) -> Path:
    log = _log("apply-predictions")
    inventory = load_inventory(inventory_path)
    preds = parse_predictions(predictions_path)
    result = apply_predictions(inventory, preds)
    digest = write_stage_manifest(
        out, "apply-predictions", cfg.seed, {},
        input_digests({"inventory": inventory_path, "predictions": predictions_path}),
    )
    classified_path = out / "inventory_classified.csv"
    write_inventory(result.inventory, classified_path, comments=_stamp(digest))
    write_csv(
        out / "apply_summary.csv",
        ("n_applied", "n_unknown", "unknown_rate", "n_discrepancies"),
        [[result.n_applied, result.n_unknown, repr(result.unknown_rate),
          len(result.discrepancies)]],
        comments=_stamp(digest),
    )
    write_csv(
        out / "discrepancies.csv",
        ("building_id",),
        [[b] for b in result.discrepancies],
        comments=_stamp(digest),
    )
    for building_id in result.discrepancies:
        log.warning("prediction for unknown building %s", building_id)
    log.info(
        "applied=%d unknown=%d unknown_rate=%.4f",
        result.n_applied, result.n_unknown, result.unknown_rate,
    )
    return classified_path


def stage_evaluate(cfg: PipelineConfig, truth_path: Path, predictions_path: Path,
                   out: Path) -> Path:
    log = _log("evaluate")
    truth_inv = load_inventory(truth_path)
    truth = truth_inv.labeled(*LABEL_SOURCES)
    if not truth:
        raise ValidationError(f"{truth_path}: no labeled buildings to evaluate against")
    preds = parse_predictions(predictions_path)
    y_true, y_pred, unmatched = align_labels(truth, preds)
    for building_id in unmatched:
        log.warning("prediction for unknown building %s", building_id)
    if not y_true:
        raise ValidationError("no overlapping building ids between truth and predictions")
    cm = confusion(y_true, y_pred, CLASS_ORDER)
    result = metrics(cm)
    digest = write_stage_manifest(
        out, "evaluate", cfg.seed, {},
        input_digests({"truth": truth_path, "predictions": predictions_path}),
    )
    write_csv(
        out / "confusion.csv",
        ("true", *(c.value for c in cm.classes)),
        [[cls.value, *row] for cls, row in zip(cm.classes, cm.counts)],
        comments=_stamp(digest),
    )
    metrics_path = out / "metrics.csv"
    write_csv(
        metrics_path,
        ("class", "precision", "recall", "f1", "support"),
        [
            [str(row["class"]), repr(row["precision"]), repr(row["recall"]),
             repr(row["f1"]), row["support"]]
            for row in metrics_rows(result)
        ],
        comments=_stamp(digest),
    )
    (out / "metrics.txt").write_text(
        format_metrics_table(result) + "\n", encoding="utf-8"
    )
    log.info("pairs=%d accuracy=%.4f", cm.total, result.accuracy)
    return metrics_path


def stage_sweep(cfg: PipelineConfig, inventory_path: Path, out: Path) -> Path:
    log = _log("sweep-radius")
    inventory = load_inventory(inventory_path)
    labels = inventory.labeled(*LABEL_SOURCES)
    if not labels:
        raise ValidationError(f"{inventory_path}: no labeled buildings for the sweep")
    index = spatial.NeighborIndex.from_inventory(inventory)
    points = spatial.radius_sweep(index, labels, cfg.sweep_radii)
    digest = write_stage_manifest(
        out, "sweep-radius", cfg.seed,
        {"radii": list(cfg.sweep_radii)},
        input_digests({"inventory": inventory_path}),
    )
    sweep_path = out / "radius_sweep.csv"
    write_csv(
        sweep_path,
        ("radius_m", "accuracy", "missing_fraction", "n_evaluated"),
        [
            [repr(p.radius_m), repr(p.accuracy), repr(p.missing_fraction), p.n_evaluated]
            for p in points
        ],
        comments=_stamp(digest),
    )
    for p in points:
        log.info(
            "radius=%.0fm accuracy=%.4f missing=%.4f n=%d",
            p.radius_m, p.accuracy, p.missing_fraction, p.n_evaluated,
        )
    return sweep_path


def _training_sets(cfg: PipelineConfig, inventory_path: Path):
    inventory = load_inventory(inventory_path)
    labels = inventory.labeled(*LABEL_SOURCES)
    if not labels:
        raise ValidationError(f"{inventory_path}: no labeled buildings to train on")
    index = spatial.NeighborIndex.from_inventory(inventory)
    feats = spatial.neighbor_features_all(index, labels, sorted(labels), cfg.radius_m)
    sets = {
        target: imputation.build_training_set(
            inventory, feats, target, sources=LABEL_SOURCES
        )
        for target in imputation.Target
    }
    return inventory, index, labels, sets


def stage_train(cfg: PipelineConfig, inventory_path: Path, out: Path) -> Path:
    log = _log("train-impute")
    _, _, _, sets = _training_sets(cfg, inventory_path)
    configs = {"forest": _forest_config(cfg), "margin": _margin_config(cfg)}
    digest = write_stage_manifest(
        out, "train-impute", cfg.seed,
        {
            "radius_m": cfg.radius_m,
            "model_kind": cfg.model_kind,
            "cv_folds": cfg.cv_folds,
            "holdout_fraction": cfg.holdout_fraction,
            "forest": dataclasses.asdict(configs["forest"]),
            "margin": dataclasses.asdict(configs["margin"]),
        },
        input_digests({"inventory": inventory_path}),
    )
    final = {}
    for target, training in sets.items():
        rows = []
        train_rows, val_rows = imputation.split_holdout(
            len(training.y), cfg.holdout_fraction, cfg.seed
        )
        holdout_train = dataclasses.replace(
            training,
            building_ids=tuple(training.building_ids[i] for i in train_rows),
            X=training.X[train_rows],
            y=training.y[train_rows],
        )
        for kind in ("forest", "margin"):
            cv = imputation.cross_validate(
                training, kind, configs[kind], k=cfg.cv_folds, seed=cfg.seed
            )
            held = imputation.train_imputer(holdout_train, kind, configs[kind], cfg.seed)
            test_accuracy = held.accuracy(training.X[val_rows], training.y[val_rows])
            rows.append(
                [kind, cfg.study_area, repr(cv.mean_accuracy), repr(test_accuracy)]
            )
            log.info(
                "target=%s model=%s cv=%.4f test=%.4f baseline=%.4f",
                target.value, kind, cv.mean_accuracy, test_accuracy,
                cv.majority_baseline,
            )
        write_csv(
            out / f"cv_{target.value}.csv",
            ("model", "study_area", "cv_accuracy", "test_accuracy"),
            rows,
            comments=_stamp(digest),
        )
        final[target] = imputation.train_imputer(
            training, cfg.model_kind, configs[cfg.model_kind], cfg.seed
        )
    model_path = out / "imputers.json"
    payload = {
        "format_version": 1,
        "kind": "imputer-pair",
        "type": final[imputation.Target.TYPE].to_dict(),
        "complexity": final[imputation.Target.COMPLEXITY].to_dict(),
    }
    _write_json(payload, digest, model_path)
    log.info("model=%s kind=%s", model_path, cfg.model_kind)
    return model_path


def stage_impute(cfg: PipelineConfig, inventory_path: Path, model_path: Path,
                 out: Path) -> Path:
    log = _log("impute")
    inventory = load_inventory(inventory_path)
    type_imp, cplx_imp = imputation.load_imputer_pair(model_path)
    labels = inventory.labeled(*LABEL_SOURCES)
    missing_ids = [b.building_id for b in inventory.missing_roofs()]
    index = spatial.NeighborIndex.from_inventory(inventory)
    feats = spatial.neighbor_features_all(index, labels, missing_ids, cfg.radius_m)
    completed = imputation.impute_missing(inventory, type_imp, cplx_imp, feats)
    still_missing = completed.missing_roofs()
    if still_missing:
        raise InvariantError(
            f"{len(still_missing)} buildings still lack a roof after imputation"
        )
    digest = write_stage_manifest(
        out, "impute", cfg.seed,
        {"radius_m": cfg.radius_m},
        input_digests({"inventory": inventory_path, "model": model_path}),
    )
    complete_path = out / "inventory_complete.csv"
    write_inventory(completed, complete_path, comments=_stamp(digest))
    log.info("imputed=%d total=%d", len(missing_ids), len(completed))
    return complete_path


def stage_importance(cfg: PipelineConfig, inventory_path: Path, out: Path) -> list[Path]:
    log = _log("importance")
    _, _, _, sets = _training_sets(cfg, inventory_path)
    configs = {"forest": _forest_config(cfg), "margin": _margin_config(cfg)}
    digest = write_stage_manifest(
        out, "importance", cfg.seed,
        {
            "radius_m": cfg.radius_m,
            "model_kind": cfg.model_kind,
            "repeats": cfg.importance_repeats,
            "holdout_fraction": cfg.holdout_fraction,
        },
        input_digests({"inventory": inventory_path}),
    )
    written = []
    for target, training in sets.items():
        train_rows, val_rows = imputation.split_holdout(
            len(training.y), cfg.holdout_fraction, cfg.seed
        )
        held = dataclasses.replace(
            training,
            building_ids=tuple(training.building_ids[i] for i in train_rows),
            X=training.X[train_rows],
            y=training.y[train_rows],
        )
        imputer = imputation.train_imputer(
            held, cfg.model_kind, configs[cfg.model_kind], cfg.seed
        )
        report = imputation.permutation_importance(
            imputer, training.X[val_rows], training.y[val_rows],
            repeats=cfg.importance_repeats, seed=cfg.seed,
        )
        path = out / f"importance_{target.value}.csv"
        write_csv(
            path,
            ("feature", "importance_mean", "importance_std"),
            [
                [name, repr(mean), repr(std)]
                for name, mean, std in zip(
                    report.feature_names, report.mean_drop, report.std_drop
                )
            ],
            comments=[*_stamp(digest),
                      f"baseline_accuracy={report.baseline_accuracy!r}"],
        )
        top = report.ranked()[0]
        log.info(
            "target=%s baseline=%.4f top_feature=%s drop=%.4f",
            target.value, report.baseline_accuracy, top[0], top[1],
        )
        written.append(path)
    return written


def stage_aggregate(cfg: PipelineConfig, inventory_path: Path, tracts_path: Path | None,
                    out: Path) -> Path:
    log = _log("aggregate")
    inventory = load_inventory(inventory_path)
    summaries = aggregate.tract_summaries(inventory)
    dist = aggregate.city_distribution(inventory)
    digest = write_stage_manifest(
        out, "aggregate", cfg.seed, {},
        input_digests({"inventory": inventory_path, "tracts": tracts_path}),
    )
    report_path = out / "tract_report.csv"
    write_csv(
        report_path,
        aggregate.TRACT_REPORT_COLUMNS,
        aggregate.tract_report_rows(summaries),
        comments=_stamp(digest),
    )
    write_csv(
        out / "city_distribution.csv",
        ("class", "count", "share"),
        aggregate.city_report_rows(dist),
        comments=_stamp(digest),
    )
    if tracts_path is not None:
        polygons, feature_rejections = parse_tracts(tracts_path)
        for rej in feature_rejections:
            log.warning("tract feature %d rejected: %s", rej.feature_index, rej.reason)
        document, missing = aggregate.export_map(summaries, polygons)
        for tract_id in missing:
            log.warning("no polygon for tract %s; omitted from map", tract_id)
        _write_json(document, digest, out / "map.geojson")
    log.info(
        "tracts=%d buildings=%d valid_share=%.4f",
        len(summaries), len(inventory),
        1.0 - (dist.excluded_share if len(inventory) else 0.0),
    )
    return report_path


def stage_synth(cfg_synth: synth.SynthConfig, out: Path, seed: int,
                config_input: Path | None) -> dict[str, Path]:
    log = _log("synth")
    result = synth.generate(cfg_synth)
    digest = write_stage_manifest(
        out, "synth", seed,
        {f.name: getattr(cfg_synth, f.name) for f in dataclasses.fields(cfg_synth)},
        input_digests({"config": config_input}),
    )
    paths = {
        "buildings": out / "buildings.csv",
        "truth": out / "truth.csv",
        "predictions": out / "predictions.csv",
        "tracts": out / "tracts.geojson",
    }
    write_inventory(result.buildings, paths["buildings"], comments=_stamp(digest))
    write_inventory(result.truth, paths["truth"], comments=_stamp(digest))
    write_predictions(result.predictions, paths["predictions"], comments=_stamp(digest))
    _write_json(result.tracts_geojson, digest, paths["tracts"])
    (out / "synth_config.txt").write_text(
        "\n".join([f"# manifest: {digest}", *cfg_synth.to_lines()]) + "\n",
        encoding="utf-8",
    )
    log.info("buildings=%d clusters=%d", len(result.buildings), cfg_synth.n_clusters)
    return paths


# ---------------------------------------------------------------------------
# Subcommand wiring


def cmd_ingest(args: argparse.Namespace) -> int:
    cfg = _config_from(args)
    stage_ingest(cfg, Path(args.buildings),
                 Path(args.tracts) if args.tracts else None, Path(args.out))
    return 0


def cmd_plan_imagery(args: argparse.Namespace) -> int:
    cfg = _config_from(args)
    stage_plan_imagery(cfg, Path(args.inventory), Path(args.out), args.provider)
    return 0


def cmd_fetch(args: argparse.Namespace) -> int:
    cfg = _config_from(args)
    out = Path(args.out)
    cache_dir = Path(args.cache) if args.cache else out / "cache"
    stage_fetch(cfg, Path(args.plan), cache_dir, out, args.stub)
    return 0


def cmd_apply_predictions(args: argparse.Namespace) -> int:
    cfg = _config_from(args)
    stage_apply_predictions(cfg, Path(args.inventory), Path(args.predictions),
                            Path(args.out))
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _config_from(args)
    stage_evaluate(cfg, Path(args.truth), Path(args.predictions), Path(args.out))
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _config_from(args)
    stage_sweep(cfg, Path(args.inventory), Path(args.out))
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _config_from(args)
    stage_train(cfg, Path(args.inventory), Path(args.out))
    return 0


def cmd_impute(args: argparse.Namespace) -> int:
    cfg = _config_from(args)
    stage_impute(cfg, Path(args.inventory), Path(args.model), Path(args.out))
    return 0


def cmd_importance(args: argparse.Namespace) -> int:
    cfg = _config_from(args)
    stage_importance(cfg, Path(args.inventory), Path(args.out))
    return 0


def cmd_aggregate(args: argparse.Namespace) -> int:
    cfg = _config_from(args)
    stage_aggregate(cfg, Path(args.inventory),
                    Path(args.tracts) if args.tracts else None, Path(args.out))
    return 0


_SYNTH_FLAGS = (
    "seed", "n_clusters", "buildings_per_cluster", "cluster_spacing_m",
    "intra_spacing_m", "cluster_purity", "occlusion_rate", "year_threshold",
    "hip_boost", "runt_clusters", "runt_size",
)


def cmd_synth(args: argparse.Namespace) -> int:
    base = (
        synth.SynthConfig.from_file(args.synth_config)
        if args.synth_config
        else synth.SynthConfig()
    )
    overrides = {
        name: getattr(args, name)
        for name in _SYNTH_FLAGS
        if getattr(args, name, None) is not None
    }
    try:
        cfg_synth = dataclasses.replace(base, **overrides) if overrides else base
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    stage_synth(cfg_synth, Path(args.out), cfg_synth.seed,
                Path(args.synth_config) if args.synth_config else None)
    return 0


def cmd_run_all(args: argparse.Namespace) -> int:
    cfg = _config_from(args)
    out = Path(args.out)
    log = _log("run-all")
    inventory_path = stage_ingest(
        cfg, Path(args.buildings), Path(args.tracts) if args.tracts else None, out
    )
    stage_plan_imagery(cfg, inventory_path, out, args.provider)
    log.info("fetch skipped: no provider configured; run the fetch subcommand")
    classified_path = stage_apply_predictions(
        cfg, inventory_path, Path(args.predictions), out
    )
    if args.truth:
        stage_evaluate(cfg, Path(args.truth), Path(args.predictions), out)
    stage_sweep(cfg, classified_path, out)
    model_path = stage_train(cfg, classified_path, out)
    complete_path = stage_impute(cfg, classified_path, model_path, out)
    stage_importance(cfg, classified_path, out)
    stage_aggregate(cfg, complete_path, Path(args.tracts) if args.tracts else None, out)
    log.info("pipeline complete: %s", complete_path)
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value pipeline config file")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roofinv",
        description="Batch pipeline building regional roof-type inventories.",
    )
    parser.add_argument("--version", action="version", version=f"roofinv {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse buildings CSV and assign census tracts")
    _add_common(p)
    p.add_argument("--buildings", required=True)
    p.add_argument("--tracts", help="census tract GeoJSON")
    p.add_argument("--area-unit", dest="area_unit", choices=("sqm", "sqft"))
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("plan-imagery", help="compute per-building image crop plans")
    _add_common(p)
    p.add_argument("--inventory", required=True)
    p.add_argument("--provider", default=imagery.DEFAULT_PROVIDER_TEMPLATE,
                   help="URI template with {lat},{lon},{zoom},{size} placeholders")
    p.add_argument("--image-size", dest="image_size_px", type=int)
    p.add_argument("--crop-factor", dest="crop_factor", type=float)
    p.add_argument("--min-extent", dest="min_extent_m", type=float)
    p.add_argument("--max-extent", dest="max_extent_m", type=float)
    p.set_defaults(func=cmd_plan_imagery)

    p = sub.add_parser("fetch", help="execute an image plan through the cache")
    _add_common(p)
    p.add_argument("--plan", required=True)
    p.add_argument("--cache", help="cache directory (default <out>/cache)")
    p.add_argument("--stub", action="store_true",
                   help="use the offline stub fetcher instead of HTTP")
    p.add_argument("--rate", dest="rate_per_s", type=float)
    p.add_argument("--parallel", dest="parallel_fetch", type=int)
    p.add_argument("--max-retries", dest="max_retries", type=int)
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser("apply-predictions", help="merge classifier scores into the inventory")
    _add_common(p)
    p.add_argument("--inventory", required=True)
    p.add_argument("--predictions", required=True)
    p.set_defaults(func=cmd_apply_predictions)

    p = sub.add_parser("evaluate", help="confusion matrix and P/R/F1 against a truth file")
    _add_common(p)
    p.add_argument("--truth", required=True)
    p.add_argument("--predictions", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep-radius", help="dominant-type baseline over search radii")
    _add_common(p)
    p.add_argument("--inventory", required=True)
    p.add_argument("--radii", dest="sweep_radii",
                   help="comma-separated radii in meters")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("train-impute", help="train and cross-validate imputation models")
    _add_common(p)
    p.add_argument("--inventory", required=True)
    p.add_argument("--radius", dest="radius_m", type=float)
    p.add_argument("--model", dest="model_kind", choices=("forest", "margin"))
    p.add_argument("--n-trees", dest="n_trees", type=int)
    p.add_argument("--min-leaf", dest="min_leaf", type=int)
    p.add_argument("--epochs", dest="epochs", type=int)
    p.add_argument("--cv-folds", dest="cv_folds", type=int)
    p.add_argument("--jobs", dest="n_jobs", type=int)
    p.add_argument("--study-area", dest="study_area")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("impute", help="fill missing roofs from a trained model pair")
    _add_common(p)
    p.add_argument("--inventory", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--radius", dest="radius_m", type=float)
    p.set_defaults(func=cmd_impute)

    p = sub.add_parser("importance", help="held-out permutation feature importance")
    _add_common(p)
    p.add_argument("--inventory", required=True)
    p.add_argument("--radius", dest="radius_m", type=float)
    p.add_argument("--model", dest="model_kind", choices=("forest", "margin"))
    p.add_argument("--repeats", dest="importance_repeats", type=int)
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("aggregate", help="tract and city roof distributions plus map export")
    _add_common(p)
    p.add_argument("--inventory", required=True)
    p.add_argument("--tracts", help="census tract GeoJSON for the map export")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("synth", help="generate a synthetic city with ground truth")
    _add_common(p)
    p.add_argument("--synth-config", help="flat key=value synth config file")
    p.add_argument("--n-clusters", dest="n_clusters", type=int)
    p.add_argument("--buildings-per-cluster", dest="buildings_per_cluster", type=int)
    p.add_argument("--cluster-spacing", dest="cluster_spacing_m", type=float)
    p.add_argument("--intra-spacing", dest="intra_spacing_m", type=float)
    p.add_argument("--purity", dest="cluster_purity", type=float)
    p.add_argument("--occlusion", dest="occlusion_rate", type=float)
    p.add_argument("--year-threshold", dest="year_threshold", type=int)
    p.add_argument("--hip-boost", dest="hip_boost", type=float)
    p.add_argument("--runt-clusters", dest="runt_clusters", type=int)
    p.add_argument("--runt-size", dest="runt_size", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run-all", help="run the full pipeline on existing input files")
    _add_common(p)
    p.add_argument("--buildings", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--tracts")
    p.add_argument("--truth")
    p.add_argument("--provider", default=imagery.DEFAULT_PROVIDER_TEMPLATE)
    p.add_argument("--radius", dest="radius_m", type=float)
    p.add_argument("--model", dest="model_kind", choices=("forest", "margin"))
    p.add_argument("--n-trees", dest="n_trees", type=int)
    p.add_argument("--epochs", dest="epochs", type=int)
    p.add_argument("--cv-folds", dest="cv_folds", type=int)
    p.add_argument("--jobs", dest="n_jobs", type=int)
    p.add_argument("--study-area", dest="study_area")
    p.add_argument("--area-unit", dest="area_unit", choices=("sqm", "sqft"))
    p.set_defaults(func=cmd_run_all)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format=LOG_FORMAT)
    logging.captureWarnings(True)  # library warnings become structured log lines
    log = _log(args.command)
    try:
        return args.func(args)
    except MissingInputError as exc:
        log.error("missing input: %s", exc)
        return 2
    except ValidationError as exc:
        log.error("validation failure: %s", exc)
        return 3
    except InvariantError as exc:
        log.error("invariant breach: %s", exc)
        return 4
    except RoofInvError as exc:
        log.error("pipeline error: %s", exc)
        return 4
    except Exception:  # internal failure: categorize, never re-raise to a trace
        log.exception("internal error")
        return 4


if __name__ == "__main__":
    sys.exit(main())
