"""Python access to the AdeNet engine."""

from ._core import (
    ArgumentError,
    DataError,
    NumericError,
    evaluate,
    extract_features,
    feature_names,
    metrics_from_confusion,
    param_counts,
    roc_auc,
    run_cli,
    synth,
)

__all__ = [
    "ArgumentError",
    "DataError",
    "NumericError",
    "evaluate",
    "extract_features",
    "feature_names",
    "metrics_from_confusion",
    "param_counts",
    "roc_auc",
    "run_cli",
    "synth",
]
