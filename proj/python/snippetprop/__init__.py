"""Weakly-supervised temporal action localization toolkit.

Snippet summarization, bipartite random-walk feature propagation, detection
post-processing and scoring, backed by the C++ core.
"""

from snippetprop._core import (
    ConfigError,
    FormatError,
    Instance,
    NumericError,
    affinity,
    average_precision,
    birw_closed_form,
    birw_iterate,
    detect_dataset,
    evaluate,
    generate_dataset,
    head_forward,
    propagate,
    read_detections,
    summarize_em,
    summarize_kmeans,
    summarize_top_score,
    temporal_nms,
    tiou,
    train_model,
    upsample_linear,
    write_detections,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "FormatError",
    "Instance",
    "NumericError",
    "affinity",
    "average_precision",
    "birw_closed_form",
    "birw_iterate",
    "detect_dataset",
    "evaluate",
    "generate_dataset",
    "head_forward",
    "propagate",
    "read_detections",
    "summarize_em",
    "summarize_kmeans",
    "summarize_top_score",
    "temporal_nms",
    "tiou",
    "train_model",
    "upsample_linear",
    "write_detections",
]
