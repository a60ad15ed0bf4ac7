"""Roof-class taxonomy and its binary feature decomposition.

Five wind-relevant roof classes are modeled (simple gable, simple
cross-gable, complex cross-gable, simple hip, cross-hip) plus an
``unknown`` catch-all emitted by image classifiers for low-quality
inputs. Each valid class decomposes into two binary axes: the roof
family (gable vs hip) and the roof complexity (simple vs complex).
The reverse mapping is lossy by design: every complex gable maps back
to complex cross-gable.
"""

from __future__ import annotations

from enum import Enum
from typing import NamedTuple


class RoofClass(str, Enum):
    """Canonical roof classes; string values are the wire codes."""

    SIMPLE_GABLE = "g"
    SIMPLE_CROSS_GABLE = "scg"
    COMPLEX_CROSS_GABLE = "ccg"
    SIMPLE_HIP = "h"
    CROSS_HIP = "ch"
    UNKNOWN = "unknown"

    def __str__(self) -> str:
        return self.value


class RoofFamily(str, Enum):
    GABLE = "gable"
    HIP = "hip"

    def __str__(self) -> str:
        return self.value


class RoofComplexity(str, Enum):
    SIMPLE = "simple"
    COMPLEX = "complex"

    def __str__(self) -> str:
        return self.value


class RoofFeatures(NamedTuple):
    """Binary decomposition of a valid roof class."""

    family: RoofFamily
    complexity: RoofComplexity


#: Definition order doubles as the canonical class order used for score
#: columns, argmax tie-breaking, and report rows.
CLASS_ORDER: tuple[RoofClass, ...] = tuple(RoofClass)

#: The five classes that count as actual roofs; ``unknown`` is a filter
#: value and never enters a distribution statistic.
VALID_CLASSES: tuple[RoofClass, ...] = tuple(
    c for c in RoofClass if c is not RoofClass.UNKNOWN
)

GABLE_CLASSES = frozenset(
    {RoofClass.SIMPLE_GABLE, RoofClass.SIMPLE_CROSS_GABLE, RoofClass.COMPLEX_CROSS_GABLE}
)
COMPLEX_CLASSES = frozenset(
    {RoofClass.SIMPLE_CROSS_GABLE, RoofClass.COMPLEX_CROSS_GABLE, RoofClass.CROSS_HIP}
)

_TO_FEATURES = {
    RoofClass.SIMPLE_GABLE: RoofFeatures(RoofFamily.GABLE, RoofComplexity.SIMPLE),
    RoofClass.SIMPLE_CROSS_GABLE: RoofFeatures(RoofFamily.GABLE, RoofComplexity.COMPLEX),
    RoofClass.COMPLEX_CROSS_GABLE: RoofFeatures(RoofFamily.GABLE, RoofComplexity.COMPLEX),
    RoofClass.SIMPLE_HIP: RoofFeatures(RoofFamily.HIP, RoofComplexity.SIMPLE),
    RoofClass.CROSS_HIP: RoofFeatures(RoofFamily.HIP, RoofComplexity.COMPLEX),
}

# All complex gables collapse to complex cross-gable on the way back, so
# simple cross-gable is never produced by from_features.
_FROM_FEATURES = {
    RoofFeatures(RoofFamily.GABLE, RoofComplexity.SIMPLE): RoofClass.SIMPLE_GABLE,
    RoofFeatures(RoofFamily.GABLE, RoofComplexity.COMPLEX): RoofClass.COMPLEX_CROSS_GABLE,
    RoofFeatures(RoofFamily.HIP, RoofComplexity.SIMPLE): RoofClass.SIMPLE_HIP,
    RoofFeatures(RoofFamily.HIP, RoofComplexity.COMPLEX): RoofClass.CROSS_HIP,
}


def parse_roof_class(code: str) -> RoofClass:
    """Resolve a wire code like ``"scg"`` to its RoofClass."""
    try:
        return RoofClass(code)
    except ValueError:
        raise ValueError(f"unknown roof class code {code!r}") from None


def to_features(roof: RoofClass) -> RoofFeatures:
    """Decompose a valid roof class into (family, complexity).

    Raises ValueError for ``unknown``, which has no feature decomposition.
    """
    if roof is RoofClass.UNKNOWN:
        raise ValueError("unknown roof class has no feature decomposition")
    return _TO_FEATURES[roof]


def from_features(features: RoofFeatures) -> RoofClass:
    """Map a (family, complexity) pair to its representative roof class."""
    return _FROM_FEATURES[RoofFeatures(*features)]


def is_gable(roof: RoofClass) -> bool:
    """True for the three gable classes; rejects ``unknown``."""
    if roof is RoofClass.UNKNOWN:
        raise ValueError("unknown roof class has no family")
    return roof in GABLE_CLASSES


def is_complex(roof: RoofClass) -> bool:
    """True for the three multi-ridgeline classes; rejects ``unknown``."""
    if roof is RoofClass.UNKNOWN:
        raise ValueError("unknown roof class has no complexity")
    return roof in COMPLEX_CLASSES
