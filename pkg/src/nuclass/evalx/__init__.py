"""Evaluation suite: confusion matrices, metrics, ROC/AUC and the resolution harness."""
from .degrade import (
    MODES,
    PixelDownsampler,
    downsample_pixelmap,
    evaluate_model,
    generalization_eval,
    mean_pool,
    predict_scores,
    upsample_repeat,
)
from .metrics import (
    SCALAR_NAMES,
    Confusion,
    DegenerateClassError,
    MetricsReport,
    PredictionRecord,
    aggregate_from_counts,
    aggregate_metrics,
    confusion_counts,
    confusion_matrices,
    evaluate_records,
    normalize_confusion,
    pairwise_auc,
    records_from_arrays,
    roc_auc,
    roc_curve,
)
from .report import FORMATS, SCALAR_COLUMNS, emit_report, metrics_csv, read_metrics_csv, text_table

__all__ = [
    "FORMATS", "MODES", "SCALAR_COLUMNS", "SCALAR_NAMES", "Confusion", "DegenerateClassError",
    "MetricsReport", "PixelDownsampler", "PredictionRecord", "aggregate_from_counts",
    "aggregate_metrics", "confusion_counts", "confusion_matrices", "downsample_pixelmap",
    "emit_report", "evaluate_model", "evaluate_records", "generalization_eval", "mean_pool",
    "metrics_csv", "normalize_confusion", "pairwise_auc", "predict_scores", "read_metrics_csv",
    "records_from_arrays", "roc_auc", "roc_curve", "text_table",
]
