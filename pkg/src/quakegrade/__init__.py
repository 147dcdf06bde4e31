"""quakegrade: tabular multi-class damage-grade classification toolkit."""

from .dataset import (
    Dataset,
    FeatureSchema,
    GORKHA_SCHEMA,
    LabelEncoding,
    correlation_matrix,
    describe_numeric,
    frequency_table,
    from_arrays,
    load_csv,
    stratified_split,
)
from .kernels import backend_name
from .metrics import MetricsReport, class_metrics, confusion_matrix, render_report, roc_auc_ovr

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "FeatureSchema",
    "GORKHA_SCHEMA",
    "LabelEncoding",
    "MetricsReport",
    "backend_name",
    "class_metrics",
    "confusion_matrix",
    "correlation_matrix",
    "describe_numeric",
    "frequency_table",
    "from_arrays",
    "load_csv",
    "render_report",
    "roc_auc_ovr",
    "stratified_split",
    "__version__",
]
