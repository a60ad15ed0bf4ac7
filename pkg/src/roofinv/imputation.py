"""Missing-roof imputation: training sets, cross-validation, importance.

Roof prediction is deliberately two independent binary problems —
family (gable/hip) and complexity (simple/complex) — whose outputs are
recombined into a storable class. Each trained bundle freezes its
preprocessing statistics, so the exact imputation means and scaling
used in training are reapplied to prediction targets.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ModelFormatError, ValidationError
from .models import (
    ForestClassifier,
    ForestConfig,
    MarginClassifier,
    MarginConfig,
    TabularPreprocessor,
    check_labels,
    check_matrix,
    estimator_from_dict,
    load_model,
    save_model,
)
from .records import Inventory, RoofSource
from .spatial import NeighborFeatures
from .taxonomy import RoofClass, RoofComplexity, RoofFamily, RoofFeatures, from_features, to_features

#: Feature column order for both binary models. The ratio column holds
#: the type ratio for the family model and the complexity ratio for the
#: complexity model; its paired flag marks buildings with no labeled
#: neighbors (ratio mean-imputed by the preprocessor).
FEATURE_NAMES = ("year_built", "building_area", "neighbor_ratio", "neighbor_ratio_missing")

DEFAULT_HOLDOUT_FRACTION = 0.25
DEFAULT_CV_FOLDS = 10
DEFAULT_IMPORTANCE_REPEATS = 10


class Target(str, enum.Enum):
    TYPE = "type"  # 0 = gable, 1 = hip
    COMPLEXITY = "complexity"  # 0 = simple, 1 = complex

    def __str__(self) -> str:
        return self.value


def _label_for(roof: RoofClass, target: Target) -> int:
    features = to_features(roof)
    if target is Target.TYPE:
        return int(features.family is RoofFamily.HIP)
    return int(features.complexity is RoofComplexity.COMPLEX)


def _ratio_for(nf: NeighborFeatures, target: Target) -> float | None:
    return nf.type_ratio if target is Target.TYPE else nf.complexity_ratio


@dataclass(frozen=True)
class TrainingSet:
    building_ids: tuple[str, ...]
    X: np.ndarray  # raw features; NaN where the neighbor ratio is missing
    y: np.ndarray
    target: Target
    feature_names: tuple[str, ...] = FEATURE_NAMES


def feature_rows(
    records: Sequence,
    neighbor_feats: Mapping[str, NeighborFeatures],
    target: Target,
) -> np.ndarray:
    rows = np.empty((len(records), len(FEATURE_NAMES)), dtype=np.float64)
    for i, record in enumerate(records):
        nf = neighbor_feats[record.building_id]
        ratio = _ratio_for(nf, target)
        rows[i] = (
            float(record.year_built),
            record.building_area,
            np.nan if ratio is None else ratio,
            0.0 if ratio is not None else 1.0,
        )
    return rows


def build_training_set(
    inventory: Inventory,
    neighbor_feats: Mapping[str, NeighborFeatures],
    target: Target,
    sources: tuple[RoofSource, ...] = (RoofSource.CLASSIFIED, RoofSource.LABELED_TRUTH),
) -> TrainingSet:
    """One row per labeled building; labels from the binary decomposition."""
    records = [r for r in inventory if r.roof is not None and r.roof_source in sources]
    if not records:
        raise ValidationError("no labeled buildings to train on")
    X = feature_rows(records, neighbor_feats, target)
    y = np.array([_label_for(r.roof, target) for r in records], dtype=np.int64)
    return TrainingSet(
        building_ids=tuple(r.building_id for r in records), X=X, y=y, target=target
    )


def majority_rate(y: np.ndarray) -> float:
    """Accuracy of always predicting the most common label."""
    y = check_labels(y, len(y))
    return float(np.bincount(y).max() / y.shape[0])


# ---------------------------------------------------------------------------
# Stratified cross-validation


def stratified_folds(y: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Fold id per row; per-class counts differ by at most one across folds.

    Each class's rows are shuffled with a seeded generator and dealt
    round-robin, with the starting fold rotating per class so small
    classes do not all land in fold 0.
    """
    n = y.shape[0]
    if not 2 <= k <= n:
        raise ValueError(f"k must be in [2, {n}], got {k}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    folds = np.empty(n, dtype=np.intp)
    offset = 0
    for cls in np.unique(y):
        rows = np.flatnonzero(y == cls)
        if rows.shape[0] < k:
            warnings.warn(
                f"class {cls} has {rows.shape[0]} rows for {k} folds; "
                "stratification relaxed",
                stacklevel=2,
            )
        rows = rng.permutation(rows)
        folds[rows] = (np.arange(rows.shape[0]) + offset) % k
        offset += rows.shape[0]
    return folds


def _make_model(kind: str, config: ForestConfig | MarginConfig | None, seed: int):
    if kind == "forest":
        cfg = config or ForestConfig()
        return ForestClassifier(
            n_trees=cfg.n_trees,
            min_leaf=cfg.min_leaf,
            bootstrap_fraction=cfg.bootstrap_fraction,
            max_features=cfg.max_features,
            n_jobs=cfg.n_jobs,
            seed=seed,
        )
    if kind == "margin":
        cfg = config or MarginConfig()
        return MarginClassifier(
            epochs=cfg.epochs,
            lambda_l2=cfg.lambda_l2,
            learning_rate=cfg.learning_rate,
            seed=seed,
        )
    raise ValueError(f"unknown model kind {kind!r}")


@dataclass(frozen=True)
class CVResult:
    kind: str
    target: Target
    fold_accuracies: tuple[float, ...]
    majority_baseline: float

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.fold_accuracies))


def cross_validate(
    training: TrainingSet,
    kind: str,
    config: ForestConfig | MarginConfig | None = None,
    k: int = DEFAULT_CV_FOLDS,
    seed: int = 0,
) -> CVResult:
    """Mean held-out accuracy over seeded stratified folds.

    Preprocessing statistics (imputation means, standardization) are
    recomputed inside each training fold; the held-out fold only ever
    passes through a transform.
    """
    X = check_matrix(training.X, allow_nan=True)
    y = check_labels(training.y, X.shape[0])
    folds = stratified_folds(y, k, seed)
    model_seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(k)]
    accuracies = []
    for fold in range(k):
        val = folds == fold
        train = ~val
        if not val.any():
            continue
        pre = TabularPreprocessor().fit(X[train])
        model = _make_model(kind, config, model_seeds[fold])
        model.fit(pre.transform(X[train]), y[train])
        predicted = model.predict(pre.transform(X[val]))
        accuracies.append(float(np.mean(predicted == y[val])))
    return CVResult(
        kind=kind,
        target=training.target,
        fold_accuracies=tuple(accuracies),
        majority_baseline=majority_rate(y),
    )


def split_holdout(
    n: int, fraction: float = DEFAULT_HOLDOUT_FRACTION, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Seeded (train_rows, validation_rows) index split."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    order = rng.permutation(n)
    n_val = max(1, int(round(fraction * n)))
    if n_val >= n:
        raise ValueError(f"holdout of {n_val} rows leaves no training data (n={n})")
    return np.sort(order[n_val:]), np.sort(order[:n_val])


# ---------------------------------------------------------------------------
# Trained bundles


@dataclass(frozen=True)
class TrainedImputer:
    """A binary model plus the frozen preprocessing that feeds it."""

    target: Target
    kind: str
    preprocessor: TabularPreprocessor
    model: ForestClassifier | MarginClassifier
    feature_names: tuple[str, ...]
    seed: int

    def predict(self, X_raw: np.ndarray) -> np.ndarray:
        return self.model.predict(self.preprocessor.transform(X_raw))

    def accuracy(self, X_raw: np.ndarray, y: np.ndarray) -> float:
        return float(np.mean(self.predict(X_raw) == y))

    def to_dict(self) -> dict:
        return {
            "kind": "imputer",
            "target": self.target.value,
            "model_kind": self.kind,
            "feature_names": list(self.feature_names),
            "seed": self.seed,
            "preprocessor": self.preprocessor.to_dict(),
            "model": self.model.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict, source: str = "model") -> "TrainedImputer":
        try:
            return cls(
                target=Target(data["target"]),
                kind=data["model_kind"],
                preprocessor=estimator_from_dict(data["preprocessor"], source),
                model=estimator_from_dict(data["model"], source),
                feature_names=tuple(data["feature_names"]),
                seed=int(data["seed"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelFormatError(f"{source}: malformed imputer payload ({exc})") from None


def train_imputer(
    training: TrainingSet,
    kind: str = "forest",
    config: ForestConfig | MarginConfig | None = None,
    seed: int = 0,
) -> TrainedImputer:
    pre = TabularPreprocessor().fit(training.X)
    model = _make_model(kind, config, seed)
    model.fit(pre.transform(training.X), training.y)
    return TrainedImputer(
        target=training.target,
        kind=kind,
        preprocessor=pre,
        model=model,
        feature_names=training.feature_names,
        seed=seed,
    )


def save_imputer_pair(
    type_imputer: TrainedImputer, complexity_imputer: TrainedImputer, path: str | Path
) -> None:
    if type_imputer.target is not Target.TYPE or complexity_imputer.target is not Target.COMPLEXITY:
        raise ValueError("pair must be (type imputer, complexity imputer)")
    save_model(
        {
            "kind": "imputer-pair",
            "type": type_imputer.to_dict(),
            "complexity": complexity_imputer.to_dict(),
        },
        path,
    )


def load_imputer_pair(path: str | Path) -> tuple[TrainedImputer, TrainedImputer]:
    data = load_model(path)
    if data.get("kind") != "imputer-pair":
        raise ModelFormatError(f"{path}: expected an imputer-pair file")
    return (
        TrainedImputer.from_dict(data["type"], str(path)),
        TrainedImputer.from_dict(data["complexity"], str(path)),
    )


# ---------------------------------------------------------------------------
# Permutation importance


@dataclass(frozen=True)
class ImportanceReport:
    feature_names: tuple[str, ...]
    baseline_accuracy: float
    mean_drop: tuple[float, ...]
    std_drop: tuple[float, ...]
    repeats: int

    def ranked(self) -> list[tuple[str, float, float]]:
        order = np.argsort(self.mean_drop)[::-1]
        return [(self.feature_names[i], self.mean_drop[i], self.std_drop[i]) for i in order]


def permutation_importance(
    imputer: TrainedImputer,
    X_val_raw: np.ndarray,
    y_val: np.ndarray,
    repeats: int = DEFAULT_IMPORTANCE_REPEATS,
    seed: int = 0,
) -> ImportanceReport:
    """Held-out accuracy drop per feature under seeded column shuffles.

    The validation matrix must be disjoint from the training rows; the
    report is meaningless otherwise.
    """
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    X = check_matrix(X_val_raw, allow_nan=True)
    y = check_labels(y_val, X.shape[0])
    baseline = imputer.accuracy(X, y)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    means = []
    stds = []
    for col in range(X.shape[1]):
        drops = np.empty(repeats, dtype=np.float64)
        for rep in range(repeats):
            shuffled = X.copy()
            shuffled[:, col] = shuffled[rng.permutation(X.shape[0]), col]
            drops[rep] = baseline - imputer.accuracy(shuffled, y)
        means.append(float(drops.mean()))
        stds.append(float(drops.std()))
    return ImportanceReport(
        feature_names=imputer.feature_names,
        baseline_accuracy=baseline,
        mean_drop=tuple(means),
        std_drop=tuple(stds),
        repeats=repeats,
    )


# ---------------------------------------------------------------------------
# Applying models to the missing set


def impute_missing(
    inventory: Inventory,
    type_imputer: TrainedImputer,
    complexity_imputer: TrainedImputer,
    neighbor_feats: Mapping[str, NeighborFeatures],
) -> Inventory:
    """Fill every roof-absent building from the two binary predictions.

    Existing labels are never touched; afterwards no building lacks a
    roof. The combined class always lies in the image of the feature
    recombination (complex gables collapse to the complex cross-gable
    class).
    """
    missing = inventory.missing_roofs()
    if not missing:
        return inventory
    X_type = feature_rows(missing, neighbor_feats, Target.TYPE)
    X_cplx = feature_rows(missing, neighbor_feats, Target.COMPLEXITY)
    family_pred = type_imputer.predict(X_type)
    cplx_pred = complexity_imputer.predict(X_cplx)
    updated = []
    for record, fam, cpx in zip(missing, family_pred, cplx_pred):
        features = RoofFeatures(
            family=RoofFamily.HIP if fam == 1 else RoofFamily.GABLE,
            complexity=RoofComplexity.COMPLEX if cpx == 1 else RoofComplexity.SIMPLE,
        )
        updated.append(record.with_roof(from_features(features), RoofSource.IMPUTED))
    return inventory.replace_records(updated)
