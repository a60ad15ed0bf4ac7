"""Regional roof-type inventory pipeline.

Batch tooling that turns a building table, census-tract polygons, and
per-building classifier scores into a complete roof inventory: merge
predictions, measure neighborhood roof statistics, impute the roofs the
classifier could not see, and aggregate tract-level distributions for
wind-risk reporting.
"""

__version__ = "0.1.0"
