"""Embedding scatter plots.

Figures are written as SVG with a fixed hash salt and no date stamp, so the
same embedding always produces the same bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.lines import Line2D  # noqa: E402

POINTS_GID = "points"
MAX_LEGEND_ENTRIES = 12
SINGLETON_COLOR = "#b0b0b0"

STYLE = {
    "svg.hashsalt": "tsneseg",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.linewidth": 0.8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.fontsize": 7,
    "legend.frameon": False,
}


def cluster_colors(labels: np.ndarray, sizes) -> np.ndarray:
    """One RGBA row per point; singleton clusters are drawn grey."""
    cmap = plt.get_cmap("tab20")
    palette = np.array([cmap(i % 20) for i in range(len(sizes))])
    colors = palette[labels]
    singles = np.asarray(sizes)[labels] == 1
    colors[singles] = matplotlib.colors.to_rgba(SINGLETON_COLOR)
    return colors


def embedding_figure(coords: np.ndarray, labels: np.ndarray, sizes, title: str | None = None):
    coords = np.asarray(coords)
    labels = np.asarray(labels, dtype=int)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 5.0))
        colors = cluster_colors(labels, sizes)
        sc = ax.scatter(coords[:, 0], coords[:, 1], c=colors, s=6, linewidths=0)
        sc.set_gid(POINTS_GID)
        handles = []
        shown = [k for k, s in enumerate(sizes) if s > 1][:MAX_LEGEND_ENTRIES]
        for k in shown:
            handles.append(Line2D([], [], ls="", marker="o", ms=4, color=colors[labels == k][0],
                                  label=f"{k} (n={sizes[k]})"))
        rest = [s for k, s in enumerate(sizes) if k not in shown]
        if rest:
            handles.append(Line2D([], [], ls="", marker="o", ms=4, color=SINGLETON_COLOR,
                                  label=f"{len(rest)} more ({sum(rest)} pts)"))
        ax.legend(handles=handles, loc="center left", bbox_to_anchor=(1.0, 0.5), title="cluster")
        ax.set_xlabel("t-SNE 1")
        ax.set_ylabel("t-SNE 2")
        if title:
            ax.set_title(title)
        fig.tight_layout()
    return fig


def save_embedding_svg(path: str | Path, coords: np.ndarray, labels: np.ndarray, sizes,
                       title: str | None = None) -> None:
    fig = embedding_figure(coords, labels, sizes, title)
    with plt.rc_context(STYLE):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def count_svg_points(path: str | Path) -> int:
    """Number of marker elements inside the scatter group of an SVG written here."""
    import xml.etree.ElementTree as ET

    ns = "{http://www.w3.org/2000/svg}"
    root = ET.parse(path).getroot()
    for g in root.iter(ns + "g"):
        if g.get("id") == POINTS_GID:
            return sum(1 for _ in g.iter(ns + "use"))
    raise ValueError(f"no '{POINTS_GID}' group in {path}")
