"""Metrics and result tables.

The experiment, ablation and sweep drivers live in ``evaluation.experiment``
and ``evaluation.ablation``.
"""

from .metrics import (
    accuracy_from_logits,
    class_subset,
    evaluate_accuracy,
    intra_class_discrepancy,
    mean_off_diagonal,
    pairwise_distances,
)
from .report import ResultTable, read_source_rows, write_source_rows

__all__ = [
    "ResultTable",
    "accuracy_from_logits",
    "class_subset",
    "evaluate_accuracy",
    "intra_class_discrepancy",
    "mean_off_diagonal",
    "pairwise_distances",
    "read_source_rows",
    "write_source_rows",
]
