"""Visualization generation modules."""

from .accuracy import create_accuracy_chart
from .heatmap import create_heatmap, export_heatmap, heatmap_pixels

__all__ = [
    "create_accuracy_chart",
    "create_heatmap",
    "export_heatmap",
    "heatmap_pixels",
]
