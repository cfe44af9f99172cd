"""Plotly chart helpers."""
from __future__ import annotations

import logging
from pathlib import Path

import pandas as pd
import plotly.express as px
import plotly.graph_objects as go

logger = logging.getLogger(__name__)


def accuracy_bar(df: pd.DataFrame) -> go.Figure:
    """Mean accuracy per alpha, one bar per strategy."""
    plot_df = df.assign(alpha=df["alpha"].map(lambda a: f"{a:g}"))
    fig = px.bar(
        plot_df,
        x="alpha",
        y="accuracy",
        color="strategy",
        barmode="group",
        facet_col="dataset" if plot_df["dataset"].nunique() > 1 else None,
        title="Federated classifier accuracy",
    )
    fig.update_layout(margin=dict(l=40, r=40, t=50, b=40), xaxis_title="Dirichlet alpha", yaxis_title="Accuracy")
    fig.update_traces(hovertemplate="alpha %{x}<br>%{y:.3f}")
    return fig


def step_curve(df: pd.DataFrame) -> go.Figure:
    """Accuracy against augmentation step; step 0 is the real-data baseline."""
    fig = go.Figure()
    for run, frame in df.groupby("run", sort=True):
        fig.add_trace(
            go.Scatter(
                x=frame["step"],
                y=frame["accuracy"],
                mode="lines+markers",
                name=str(run),
            )
        )
    fig.update_layout(title="Accuracy per augmentation step", xaxis_title="Step", yaxis_title="Accuracy")
    return fig


def efficacy_bar(df: pd.DataFrame) -> go.Figure:
    fig = px.bar(
        df,
        x="training_data",
        y="accuracy",
        color="training_data",
        text="accuracy",
        title="Train on real vs train on synthetic (tested on real)",
    )
    fig.update_traces(texttemplate="%{text:.3f}", textposition="outside")
    fig.update_layout(margin=dict(l=40, r=40, t=50, b=40), showlegend=False, xaxis_title="", yaxis_title="Accuracy")
    return fig


def save_figure(fig: go.Figure, stem: Path, image_format: str = "png") -> Path:
    """Static export through kaleido; ``html`` skips the image renderer."""
    stem.parent.mkdir(parents=True, exist_ok=True)
    if image_format == "html":
        path = stem.with_suffix(".html")
        fig.write_html(str(path), include_plotlyjs="cdn")
        return path
    path = stem.with_suffix(f".{image_format}")
    fig.write_image(str(path))
    return path


__all__ = ["accuracy_bar", "step_curve", "efficacy_bar", "save_figure"]
