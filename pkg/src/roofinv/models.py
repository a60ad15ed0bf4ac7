"""From-scratch tabular learners behind a scikit-learn estimator API.

The learning algorithms here are implemented directly (Gini-impurity
decision trees with bagging; hinge-loss linear descent) — only the
estimator protocol (fit/predict/get_params, clone compatibility) is
borrowed from scikit-learn's base classes so the models compose with
standard tooling.

Determinism contract: (seed, data, hyperparameters) fully determine
every model, including forests trained with tree-level parallelism;
per-tree generators are spawned from the master seed, so scheduling
order cannot leak into the result.
"""

from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin

from .errors import MissingInputError, ModelFormatError

MODEL_FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# Validation helpers


def check_matrix(X: Any, name: str = "X", allow_nan: bool = False) -> np.ndarray:
    """Coerce to a 2-D float64 array; NaN only where explicitly allowed."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError(f"{name} must be non-empty, got shape {arr.shape}")
    if np.isinf(arr).any():
        raise ValueError(f"{name} contains infinite values")
    if not allow_nan and np.isnan(arr).any():
        raise ValueError(f"{name} contains NaN; impute before fitting")
    return arr


def check_labels(y: Any, n_rows: int, name: str = "y") -> np.ndarray:
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    if arr.shape[0] != n_rows:
        raise ValueError(f"{name} has {arr.shape[0]} rows, expected {n_rows}")
    return arr


def check_fitted(estimator: Any, attribute: str) -> None:
    if not hasattr(estimator, attribute):
        raise RuntimeError(
            f"{type(estimator).__name__} is not fitted; call fit() first"
        )


# ---------------------------------------------------------------------------
# Preprocessing


class TabularPreprocessor(BaseEstimator, TransformerMixin):
    """Column-mean imputation followed by standardization.

    Both the imputation means and the standardization statistics are
    learned in fit and stored on the instance, so they can be frozen
    into a model file and reapplied verbatim to prediction targets.
    Zero-variance columns standardize to constant zero (scale 1).
    """

    def fit(self, X: Any, y: Any = None) -> "TabularPreprocessor":
        arr = check_matrix(X, allow_nan=True)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN column mean
            means = np.nanmean(arr, axis=0)
        means = np.where(np.isnan(means), 0.0, means)
        filled = np.where(np.isnan(arr), means, arr)
        center = filled.mean(axis=0)
        scale = filled.std(axis=0)
        scale = np.where(scale == 0.0, 1.0, scale)
        self.impute_means_ = means
        self.center_ = center
        self.scale_ = scale
        self.n_features_in_ = arr.shape[1]
        return self

    def transform(self, X: Any) -> np.ndarray:
        check_fitted(self, "impute_means_")
        arr = check_matrix(X, allow_nan=True)
        if arr.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {arr.shape[1]} features, preprocessor was fitted "
                f"on {self.n_features_in_}"
            )
        filled = np.where(np.isnan(arr), self.impute_means_, arr)
        return (filled - self.center_) / self.scale_

    def to_dict(self) -> dict:
        check_fitted(self, "impute_means_")
        return {
            "kind": "preprocessor",
            "impute_means": [float(v) for v in self.impute_means_],
            "center": [float(v) for v in self.center_],
            "scale": [float(v) for v in self.scale_],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TabularPreprocessor":
        pre = cls()
        pre.impute_means_ = np.asarray(data["impute_means"], dtype=np.float64)
        pre.center_ = np.asarray(data["center"], dtype=np.float64)
        pre.scale_ = np.asarray(data["scale"], dtype=np.float64)
        pre.n_features_in_ = len(pre.impute_means_)
        return pre


# ---------------------------------------------------------------------------
# Decision tree (Gini impurity, axis-aligned splits)


@dataclass
class _Tree:
    """Flat-array tree; leaves have feature == -1 and carry a class index."""

    feature: list[int]
    threshold: list[float]
    left: list[int]
    right: list[int]
    value: list[int]

    def predict(self, X: np.ndarray) -> np.ndarray:
        n = X.shape[0]
        feature = np.asarray(self.feature, dtype=np.intp)
        threshold = np.asarray(self.threshold, dtype=np.float64)
        left = np.asarray(self.left, dtype=np.intp)
        right = np.asarray(self.right, dtype=np.intp)
        value = np.asarray(self.value, dtype=np.intp)
        node = np.zeros(n, dtype=np.intp)
        active = feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            f = feature[node[rows]]
            go_left = X[rows, f] <= threshold[node[rows]]
            node[rows] = np.where(go_left, left[node[rows]], right[node[rows]])
            active = feature[node] >= 0
        return value[node]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left,
            "right": self.right,
            "value": self.value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "_Tree":
        return cls(
            feature=[int(v) for v in data["feature"]],
            threshold=[float(v) for v in data["threshold"]],
            left=[int(v) for v in data["left"]],
            right=[int(v) for v in data["right"]],
            value=[int(v) for v in data["value"]],
        )


def _gini_from_counts(counts: np.ndarray, totals: np.ndarray) -> np.ndarray:
    """Gini impurity per row of class-count vectors; totals must be > 0."""
    p = counts / totals[:, None]
    return 1.0 - (p * p).sum(axis=1)


def best_split(
    X: np.ndarray,
    y: np.ndarray,
    rows: np.ndarray,
    features: Sequence[int],
    min_leaf: int,
    n_classes: int,
) -> tuple[int, float] | None:
    """Exact best (feature, threshold) by weighted-Gini minimization.

    Candidate thresholds are midpoints between adjacent distinct sorted
    values. Ties resolve to the first feature in the given order, then
    the lowest threshold, so the search is deterministic. Returns None
    when no split leaves min_leaf rows on both sides.
    """
    n = rows.shape[0]
    best_score = np.inf
    best_choice: tuple[int, float] | None = None
    y_rows = y[rows]
    for f in features:
        xs = X[rows, f]
        order = np.argsort(xs, kind="stable")
        xs_sorted = xs[order]
        ys_sorted = y_rows[order]
        onehot = np.zeros((n, n_classes), dtype=np.float64)
        onehot[np.arange(n), ys_sorted] = 1.0
        cum = onehot.cumsum(axis=0)
        boundary = np.flatnonzero(xs_sorted[:-1] < xs_sorted[1:])  # split after index i
        if boundary.size == 0:
            continue
        n_left = boundary + 1
        n_right = n - n_left
        legal = (n_left >= min_leaf) & (n_right >= min_leaf)
        if not legal.any():
            continue
        boundary = boundary[legal]
        n_left = n_left[legal]
        n_right = n_right[legal]
        left_counts = cum[boundary]
        right_counts = cum[-1] - left_counts
        weighted = (
            n_left * _gini_from_counts(left_counts, n_left)
            + n_right * _gini_from_counts(right_counts, n_right)
        ) / n
        i = int(np.argmin(weighted))  # first minimum → lowest threshold
        if weighted[i] < best_score - 1e-15:
            best_score = float(weighted[i])
            b = boundary[i]
            best_choice = (f, float((xs_sorted[b] + xs_sorted[b + 1]) / 2.0))
    return best_choice


def _grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    rows: np.ndarray,
    n_classes: int,
    min_leaf: int,
    n_candidate_features: int,
    rng: np.random.Generator,
) -> _Tree:
    tree = _Tree([], [], [], [], [])

    def majority(idx: np.ndarray) -> int:
        counts = np.bincount(y[idx], minlength=n_classes)
        return int(np.argmax(counts))  # tie → lowest class index

    def add_leaf(idx: np.ndarray) -> int:
        node = len(tree.feature)
        tree.feature.append(-1)
        tree.threshold.append(0.0)
        tree.left.append(-1)
        tree.right.append(-1)
        tree.value.append(majority(idx))
        return node

    d = X.shape[1]

    def build(idx: np.ndarray) -> int:
        labels = y[idx]
        if idx.shape[0] < 2 * min_leaf or (labels == labels[0]).all():
            return add_leaf(idx)
        if n_candidate_features >= d:
            features: Sequence[int] = range(d)
        else:
            features = np.sort(rng.choice(d, size=n_candidate_features, replace=False))
        choice = best_split(X, y, idx, features, min_leaf, n_classes)
        if choice is None:
            return add_leaf(idx)
        f, t = choice
        node = len(tree.feature)
        tree.feature.append(int(f))
        tree.threshold.append(t)
        tree.left.append(-1)
        tree.right.append(-1)
        tree.value.append(-1)
        mask = X[idx, f] <= t
        tree.left[node] = build(idx[mask])
        tree.right[node] = build(idx[~mask])
        return node

    build(rows)
    return tree


class ForestClassifier(BaseEstimator, ClassifierMixin):
    """Bagged Gini decision trees with per-split feature subsampling.

    max_features: "sqrt" (ceil of the square root of the feature count),
    "all", or an integer count. Trees grow until pure or min_leaf-bound;
    zero-gain splits are allowed so interaction patterns (e.g. XOR) are
    still separable.
    """

    def __init__(
        self,
        n_trees: int = 100,
        min_leaf: int = 5,
        bootstrap_fraction: float = 1.0,
        max_features: str | int = "sqrt",
        seed: int = 0,
        n_jobs: int = 1,
    ) -> None:
        self.n_trees = n_trees
        self.min_leaf = min_leaf
        self.bootstrap_fraction = bootstrap_fraction
        self.max_features = max_features
        self.seed = seed
        self.n_jobs = n_jobs

    def _n_candidate_features(self, d: int) -> int:
        if self.max_features == "sqrt":
            return min(d, math.ceil(math.sqrt(d)))
        if self.max_features == "all":
            return d
        m = int(self.max_features)
        if not 1 <= m <= d:
            raise ValueError(f"max_features {m} outside [1, {d}]")
        return m

    def fit(self, X: Any, y: Any) -> "ForestClassifier":
        if self.n_trees < 1 or self.min_leaf < 1:
            raise ValueError("n_trees and min_leaf must be at least 1")
        if not 0.0 < self.bootstrap_fraction <= 1.0:
            raise ValueError("bootstrap_fraction must be in (0, 1]")
        arr = check_matrix(X)
        labels = check_labels(y, arr.shape[0])
        self.classes_, y_enc = np.unique(labels, return_inverse=True)
        self.n_features_in_ = arr.shape[1]
        if self.classes_.shape[0] < 2:
            warnings.warn(
                "single-class training data: fitting a constant model",
                stacklevel=2,
            )
            self.trees_ = []
            return self
        n = arr.shape[0]
        n_boot = max(1, int(round(self.bootstrap_fraction * n)))
        m = self._n_candidate_features(arr.shape[1])
        n_classes = self.classes_.shape[0]
        seeds = np.random.SeedSequence(self.seed).spawn(self.n_trees)

        def grow(seq: np.random.SeedSequence) -> _Tree:
            rng = np.random.default_rng(seq)
            rows = rng.integers(0, n, size=n_boot)
            return _grow_tree(arr, y_enc, rows, n_classes, self.min_leaf, m, rng)

        if self.n_jobs > 1:
            with ThreadPoolExecutor(max_workers=self.n_jobs) as pool:
                self.trees_ = list(pool.map(grow, seeds))
        else:
            self.trees_ = [grow(s) for s in seeds]
        return self

    def _votes(self, X: Any) -> np.ndarray:
        check_fitted(self, "classes_")
        arr = check_matrix(X)
        if arr.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {arr.shape[1]} features, model was fitted "
                f"on {self.n_features_in_}"
            )
        n_classes = max(1, self.classes_.shape[0])
        votes = np.zeros((arr.shape[0], n_classes), dtype=np.int64)
        if not self.trees_:
            votes[:, 0] = 1  # degenerate constant model
            return votes
        for tree in self.trees_:
            preds = tree.predict(arr)
            votes[np.arange(arr.shape[0]), preds] += 1
        return votes

    def predict_proba(self, X: Any) -> np.ndarray:
        votes = self._votes(X)
        return votes / votes.sum(axis=1, keepdims=True)

    def predict(self, X: Any) -> np.ndarray:
        votes = self._votes(X)
        return self.classes_[np.argmax(votes, axis=1)]

    def to_dict(self) -> dict:
        check_fitted(self, "classes_")
        return {
            "kind": "forest",
            "params": {
                "n_trees": self.n_trees,
                "min_leaf": self.min_leaf,
                "bootstrap_fraction": self.bootstrap_fraction,
                "max_features": self.max_features,
                "seed": self.seed,
            },
            "classes": [int(c) for c in self.classes_],
            "n_features_in": int(self.n_features_in_),
            "trees": [t.to_dict() for t in self.trees_],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ForestClassifier":
        model = cls(**data["params"])
        model.classes_ = np.asarray(data["classes"], dtype=np.int64)
        model.n_features_in_ = int(data["n_features_in"])
        model.trees_ = [_Tree.from_dict(t) for t in data["trees"]]
        return model


# ---------------------------------------------------------------------------
# Linear margin classifier (hinge loss, L2 penalty)


class MarginClassifier(BaseEstimator, ClassifierMixin):
    """Linear max-margin classifier trained by per-sample hinge descent.

    Expects standardized features. The bias is unregularized; a score of
    exactly zero predicts the lower class. Zero-variance columns are
    dropped (weight pinned to zero) with a warning.
    """

    def __init__(
        self,
        epochs: int = 50,
        lambda_l2: float = 1e-4,
        learning_rate: float = 0.1,
        seed: int = 0,
    ) -> None:
        self.epochs = epochs
        self.lambda_l2 = lambda_l2
        self.learning_rate = learning_rate
        self.seed = seed

    def fit(self, X: Any, y: Any) -> "MarginClassifier":
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.lambda_l2 < 0 or self.learning_rate <= 0:
            raise ValueError("lambda_l2 must be >= 0 and learning_rate > 0")
        arr = check_matrix(X)
        labels = check_labels(y, arr.shape[0])
        self.classes_, y_enc = np.unique(labels, return_inverse=True)
        self.n_features_in_ = arr.shape[1]
        if self.classes_.shape[0] > 2:
            raise ValueError(
                f"binary classifier, got {self.classes_.shape[0]} classes"
            )
        if self.classes_.shape[0] < 2:
            warnings.warn(
                "single-class training data: fitting a constant model",
                stacklevel=2,
            )
            self.weights_ = np.zeros(arr.shape[1])
            self.bias_ = -1.0  # score < 0 → classes_[0]
            self.dropped_features_ = ()
            return self

        # max == min is an exact constancy test; var() of a constant
        # column can come back as rounding dust instead of zero.
        spans = arr.max(axis=0) - arr.min(axis=0)
        dropped = np.flatnonzero(spans == 0.0)
        if dropped.size:
            warnings.warn(
                f"dropping zero-variance feature columns {dropped.tolist()}",
                stacklevel=2,
            )
            arr = arr.copy()
            arr[:, dropped] = 0.0
        self.dropped_features_ = tuple(int(i) for i in dropped)

        # Per-sample descent is sequential by nature; at tabular feature
        # counts plain Python arithmetic outruns per-row numpy dispatch.
        signs = np.where(y_enc == 1, 1.0, -1.0).tolist()
        rows = arr.tolist()
        n, d = arr.shape
        w = [0.0] * d
        b = 0.0
        rng = np.random.default_rng(np.random.SeedSequence(self.seed))
        eta0 = self.learning_rate
        lam = self.lambda_l2
        step = 0
        for _ in range(self.epochs):
            for i in rng.permutation(n).tolist():
                step += 1
                eta = eta0 / (1.0 + eta0 * lam * step)
                x = rows[i]
                s = signs[i]
                score = b
                for j in range(d):
                    score += w[j] * x[j]
                if s * score < 1.0:
                    for j in range(d):
                        w[j] -= eta * (lam * w[j] - s * x[j])
                    b += eta * s
                else:
                    decay = 1.0 - eta * lam
                    for j in range(d):
                        w[j] *= decay
        weights = np.asarray(w, dtype=np.float64)
        if dropped.size:
            weights[dropped] = 0.0
        self.weights_ = weights
        self.bias_ = float(b)
        return self

    def decision_function(self, X: Any) -> np.ndarray:
        check_fitted(self, "weights_")
        arr = check_matrix(X)
        if arr.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {arr.shape[1]} features, model was fitted "
                f"on {self.n_features_in_}"
            )
        return arr @ self.weights_ + self.bias_

    def predict(self, X: Any) -> np.ndarray:
        scores = self.decision_function(X)
        if self.classes_.shape[0] == 1:
            return np.full(scores.shape[0], self.classes_[0])
        return np.where(scores > 0.0, self.classes_[1], self.classes_[0])

    def to_dict(self) -> dict:
        check_fitted(self, "weights_")
        return {
            "kind": "margin",
            "params": {
                "epochs": self.epochs,
                "lambda_l2": self.lambda_l2,
                "learning_rate": self.learning_rate,
                "seed": self.seed,
            },
            "classes": [int(c) for c in self.classes_],
            "n_features_in": int(self.n_features_in_),
            "weights": [float(v) for v in self.weights_],
            "bias": self.bias_,
            "dropped_features": list(self.dropped_features_),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MarginClassifier":
        model = cls(**data["params"])
        model.classes_ = np.asarray(data["classes"], dtype=np.int64)
        model.n_features_in_ = int(data["n_features_in"])
        model.weights_ = np.asarray(data["weights"], dtype=np.float64)
        model.bias_ = float(data["bias"])
        model.dropped_features_ = tuple(int(i) for i in data["dropped_features"])
        return model


# ---------------------------------------------------------------------------
# Config plumbing and serialization


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    min_leaf: int = 5
    bootstrap_fraction: float = 1.0
    max_features: str | int = "sqrt"
    n_jobs: int = 4


@dataclass(frozen=True)
class MarginConfig:
    epochs: int = 50
    lambda_l2: float = 1e-4
    learning_rate: float = 0.1


def train_forest(X: Any, y: Any, config: ForestConfig = ForestConfig(),
                 seed: int = 0) -> ForestClassifier:
    return ForestClassifier(seed=seed, **asdict(config)).fit(X, y)


def train_margin(X: Any, y: Any, config: MarginConfig = MarginConfig(),
                 seed: int = 0) -> MarginClassifier:
    return MarginClassifier(seed=seed, **asdict(config)).fit(X, y)


_KINDS = {
    "forest": ForestClassifier,
    "margin": MarginClassifier,
    "preprocessor": TabularPreprocessor,
}


def model_to_json(payload: dict) -> str:
    """Canonical serialization: sorted keys, no whitespace variance."""
    return json.dumps(
        {"format_version": MODEL_FORMAT_VERSION, **payload},
        sort_keys=True,
        separators=(",", ":"),
    ) + "\n"


def parse_model_json(text: str, source: str = "model") -> dict:
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        raise ModelFormatError(f"{source}: not valid JSON") from None
    if not isinstance(data, dict):
        raise ModelFormatError(f"{source}: expected a JSON object")
    version = data.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"{source}: format version {version!r} is not supported "
            f"(expected {MODEL_FORMAT_VERSION})"
        )
    return data


def estimator_from_dict(data: dict, source: str = "model") -> Any:
    kind = data.get("kind")
    if kind not in _KINDS:
        raise ModelFormatError(f"{source}: unknown model kind {kind!r}")
    try:
        return _KINDS[kind].from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"{source}: malformed {kind} payload ({exc})") from None


def save_model(payload: dict, path: str | Path) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(model_to_json(payload), encoding="utf-8")


def load_model(path: str | Path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise MissingInputError(f"model file not found: {p}")
    return parse_model_json(p.read_text(encoding="utf-8"), source=str(p))
