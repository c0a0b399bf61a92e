"""Static SVG figures for sweep results (heatmaps and line plots)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {"svg.hashsalt": "ringsqueeze", "svg.fonttype": "none"}


def _save(fig, path):
    with plt.rc_context(_RC):
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def heatmap(path, x, y, z, xlabel, ylabel, title, cbar_label=""):
    """Heatmap of ``z`` (shape len(y) x len(x)) on the given axes."""
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    z = np.asarray(z, dtype=float)
    mesh = ax.pcolormesh(np.asarray(x), np.asarray(y), z, shading="nearest", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label=cbar_label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)


def line_plot(path, x, series, xlabel, ylabel, title):
    """One or more curves; ``series`` maps legend label to y values."""
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    for label, y in series.items():
        ax.plot(x, y, marker="o", ms=3, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    if len(series) > 1:
        ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, path)
