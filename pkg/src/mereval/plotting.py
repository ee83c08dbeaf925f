"""Static figures written next to the CSV outputs.

Figures are built with the object-oriented matplotlib API (no pyplot state),
so they can be rendered from worker threads.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
from matplotlib.figure import Figure  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
}
GROUP_COLORS = {"basic": "#4C72B0", "sentiment": "#DD8452", "fine_grained": "#55A868", "mean": "#8C8C8C"}


def _save(fig: Figure, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata={"Software": None})
    return path


def summary_bars(columns: Sequence[str], values: Sequence[float], groups: Sequence[str], path: str | Path,
                 title: str = "") -> Path:
    """Bar chart of primary metrics (percent) per dataset."""
    with matplotlib.rc_context(STYLE):
        fig = Figure(figsize=(7.0, 3.0))
        ax = fig.add_subplot()
        x = range(len(columns))
        ax.bar(x, values, color=[GROUP_COLORS.get(g, "#4C72B0") for g in groups])
        ax.set_xticks(list(x))
        ax.set_xticklabels(columns, rotation=30, ha="right")
        ax.set_ylabel("primary metric (%)")
        ax.set_ylim(0, 100)
        for xi, v in zip(x, values):
            ax.text(xi, v + 1, f"{v:.1f}", ha="center", va="bottom", fontsize=7)
        if title:
            ax.set_title(title)
        ax.spines[["top", "right"]].set_visible(False)
        return _save(fig, Path(path))


def histogram_bars(bins: Sequence[tuple[float, float, int]], path: str | Path, xlabel: str,
                   title: str = "") -> Path:
    with matplotlib.rc_context(STYLE):
        fig = Figure(figsize=(4.5, 3.0))
        ax = fig.add_subplot()
        if bins:
            lefts = [b[0] for b in bins]
            widths = [b[1] - b[0] for b in bins]
            ax.bar(lefts, [b[2] for b in bins], width=widths, align="edge", edgecolor="white", color="#4C72B0")
        ax.set_xlabel(xlabel)
        ax.set_ylabel("samples")
        if title:
            ax.set_title(title)
        ax.spines[["top", "right"]].set_visible(False)
        return _save(fig, Path(path))


def count_bars(counts: dict[int, int], path: str | Path, xlabel: str, title: str = "") -> Path:
    with matplotlib.rc_context(STYLE):
        fig = Figure(figsize=(4.5, 3.0))
        ax = fig.add_subplot()
        keys = sorted(counts)
        ax.bar(keys, [counts[k] for k in keys], color="#55A868")
        ax.set_xlabel(xlabel)
        ax.set_ylabel("samples")
        if keys:
            ax.set_xticks(keys)
        if title:
            ax.set_title(title)
        ax.spines[["top", "right"]].set_visible(False)
        return _save(fig, Path(path))
