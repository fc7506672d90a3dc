"""Deterministic SVG rendering of result curves.

Matplotlib's SVG backend embeds hashed ids and a creation date; pinning the
hash salt and blanking the date makes identical inputs produce identical
bytes, which the reproducibility contract of the CLI relies on.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def render_line_svg(
    xs,
    ys,
    xlabel: str,
    ylabel: str,
    title: str,
    path: str | Path,
) -> None:
    """Write a single-series line chart with markers as a standalone SVG."""
    if len(xs) == 0:
        raise ValueError("cannot plot an empty series")
    with plt.rc_context({"svg.hashsalt": "stratmask", "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(6.0, 3.7))
        ax.plot(xs, ys, marker="o", markersize=3.5, linewidth=1.2, color="#1f5fa8")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.set_title(title, fontsize=10)
        ax.spines["right"].set_visible(False)
        ax.spines["top"].set_visible(False)
        ax.grid(True, alpha=0.25, linewidth=0.5)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
