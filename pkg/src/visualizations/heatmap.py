"""Intra-class discrepancy heatmaps: portable graymap export and interactive Plotly view."""

from pathlib import Path
from typing import Optional, Union

import numpy as np
import plotly.graph_objects as go

from ..errors import ValidationError


def _check_matrix(matrix: np.ndarray) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValidationError(f"heatmap needs a square matrix, got shape {matrix.shape}")
    if np.any(matrix < 0) or not np.all(np.isfinite(matrix)):
        raise ValidationError("heatmap values must be finite and nonnegative")
    return matrix


def heatmap_pixels(matrix: np.ndarray) -> np.ndarray:
    """Map ``[0, max]`` linearly onto gray levels ``[255, 0]``; darker means larger.

    An all-zero matrix maps to an all-white image.
    """
    matrix = _check_matrix(matrix)
    peak = matrix.max() if matrix.size else 0.0
    if peak == 0:
        return np.full(matrix.shape, 255, dtype=np.uint8)
    return (255 - np.round(255 * matrix / peak)).astype(np.uint8)


def export_heatmap(matrix: np.ndarray, output_path: Union[str, Path]) -> Path:
    """Write ``matrix`` as an 8-bit binary portable graymap (P5)."""
    pixels = heatmap_pixels(matrix)
    path = Path(output_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    height, width = pixels.shape
    with path.open("wb") as handle:
        handle.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        handle.write(pixels.tobytes())
    return path


def create_heatmap(
    matrix: np.ndarray,
    title: str = "Intra-class discrepancy",
    output_path: Optional[Union[str, Path]] = "output/visualizations/discrepancy.html",
    image_path: Optional[Union[str, Path]] = None,
    show: bool = False,
) -> go.Figure:
    """
    Create an interactive heatmap of pairwise output distances.

    Args:
        matrix: Square matrix of pairwise L2 distances
        title: Figure title
        output_path: Path to save HTML output (None to skip)
        image_path: Optional static image path (PNG/SVG via kaleido)
        show: Whether to display the figure immediately

    Returns:
        Plotly Figure object
    """
    matrix = _check_matrix(matrix)
    off_diagonal = matrix[~np.eye(matrix.shape[0], dtype=bool)]
    mean_distance = float(off_diagonal.mean()) if off_diagonal.size else 0.0

    fig = go.Figure(
        data=go.Heatmap(
            z=matrix,
            # Darker = bigger discrepancy, matching the graymap export
            colorscale="Greys",
            zmin=0.0,
            hovertemplate="sample %{y} vs %{x}<br>L2 distance: %{z:.4f}<extra></extra>",
            colorbar=dict(title="L2 distance", thickness=20, len=0.7),
        )
    )

    fig.update_layout(
        title=dict(
            text=f"{title}<br><sub>mean off-diagonal distance {mean_distance:.4f}</sub>",
            font=dict(size=20, color="#2C3E50"),
            x=0.5,
            xanchor="center",
        ),
        xaxis=dict(title="Sample", tickfont=dict(size=11, color="#2C3E50")),
        yaxis=dict(title="Sample", tickfont=dict(size=11, color="#2C3E50"), autorange="reversed"),
        plot_bgcolor="white",
        paper_bgcolor="white",
        height=600,
        width=650,
        font=dict(family="Arial, sans-serif"),
    )

    if output_path is not None:
        Path(output_path).parent.mkdir(parents=True, exist_ok=True)
        fig.write_html(
            str(output_path),
            config={
                "displayModeBar": True,
                "displaylogo": False,
                "modeBarButtonsToRemove": ["pan2d", "lasso2d", "select2d"],
            },
        )
    if image_path is not None:
        fig.write_image(str(image_path))

    if show:
        fig.show()

    return fig
