"""Grouped accuracy bar chart using Plotly."""

from pathlib import Path
from typing import Optional, Union

import pandas as pd
import plotly.graph_objects as go

# One colour per method row, cycling if there are more rows
METHOD_COLORS = [
    "#95A5A6",
    "#3498DB",
    "#E67E22",
    "#27AE60",
    "#8E44AD",
    "#C0392B",
    "#16A085",
    "#732DC1",
]


def create_accuracy_chart(
    summary: pd.DataFrame,
    errors: Optional[pd.DataFrame] = None,
    output_path: Optional[Union[str, Path]] = "output/visualizations/accuracy.html",
    image_path: Optional[Union[str, Path]] = None,
    show: bool = False,
) -> go.Figure:
    """
    Create a grouped bar chart of per-device accuracy for each method.

    Args:
        summary: Methods as rows, devices (plus an optional "mean" column) as
            columns, values in [0, 1]
        errors: Same layout as ``summary`` holding per-cell standard deviations
        output_path: Path to save HTML output (None to skip)
        image_path: Optional static image path (PNG/SVG via kaleido)
        show: Whether to display the figure immediately

    Returns:
        Plotly Figure object
    """
    fig = go.Figure()
    devices = summary.columns.tolist()

    for i, method in enumerate(summary.index):
        values = (summary.loc[method] * 100).round(2)
        error_bars = None
        if errors is not None and method in errors.index:
            error_bars = dict(
                type="data",
                array=(errors.loc[method].reindex(devices).fillna(0) * 100).tolist(),
                visible=True,
            )
        fig.add_trace(
            go.Bar(
                name=str(method),
                x=devices,
                y=values.tolist(),
                error_y=error_bars,
                marker=dict(color=METHOD_COLORS[i % len(METHOD_COLORS)]),
                hovertemplate=(
                    f"<b>{method}</b><br>device %{{x}}<br>accuracy %{{y:.2f}}%<extra></extra>"
                ),
            )
        )

    fig.update_layout(
        title=dict(
            text="Target-device accuracy by transfer method",
            font=dict(size=22, color="#2C3E50"),
            x=0.5,
            xanchor="center",
        ),
        barmode="group",
        xaxis=dict(title="Target device", tickfont=dict(size=12, color="#2C3E50")),
        yaxis=dict(title="Accuracy (%)", range=[0, 100], gridcolor="#E8E8E8"),
        plot_bgcolor="white",
        paper_bgcolor="white",
        height=500,
        width=950,
        legend=dict(orientation="h", y=-0.2),
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
