"""
Metrics module: accuracy, recall, CKA and round records.
"""

from .cka import (
    linear_cka,
    CkaPair,
    CkaReport,
    KnowledgePreservationReport,
    knowledge_preservation_report,
)
from .evaluation import (
    accuracy,
    per_class_recall,
    predict,
    extract_features,
    export_features,
    rounds_to_target,
    LossTerms,
    ExchangeRecord,
    RoundMetrics,
    CSV_COLUMNS,
)
from .writer import MetricsWriter

__all__ = [
    "linear_cka",
    "CkaPair",
    "CkaReport",
    "KnowledgePreservationReport",
    "knowledge_preservation_report",
    "accuracy",
    "per_class_recall",
    "predict",
    "extract_features",
    "export_features",
    "rounds_to_target",
    "LossTerms",
    "ExchangeRecord",
    "RoundMetrics",
    "CSV_COLUMNS",
    "MetricsWriter",
]
