"""Figure rendering for the report path: running-metric curves, grouped
bars, and the dotted heatmap, written as PNG files next to the delimited
tables."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import GroupedReport, HeatmapTable


def plot_history(history: Sequence[tuple[float, float]], path: str | Path) -> None:
    iterations = np.arange(1, len(history) + 1)
    win = [h[0] for h in history]
    zero = [h[1] for h in history]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(iterations, win, label="win rate", color="#2c7fb8")
    ax.plot(iterations, zero, label="zero-sense rate", color="#d95f0e")
    ax.set_xlabel("iteration")
    ax.set_ylabel("running metric")
    ax.set_ylim(-0.02, 1.02)
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_grouped(report: GroupedReport, path: str | Path) -> None:
    rows = [r for r in report.rows if r.win_rate is not None]
    if not rows:
        return
    labels = [str(r.value) for r in rows]
    x = np.arange(len(rows))
    width = 0.38
    fig, ax = plt.subplots(figsize=(max(6, 0.7 * len(rows) + 2), 4))
    ax.bar(x - width / 2, [r.win_rate for r in rows], width, label="win rate", color="#2c7fb8")
    ax.bar(x + width / 2, [r.zero_sense_rate for r in rows], width, label="zero-sense rate", color="#d95f0e")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=45, ha="right")
    ax.set_ylabel("rate")
    ax.set_title(f"metrics by {report.dimension}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_heatmap(table: HeatmapTable, path: str | Path) -> None:
    """Dotted heatmap: dot color is the cell metric, dot area is the cell's
    share of its group's examined edges."""
    if not table.cells:
        return
    fig, ax = plt.subplots(
        figsize=(max(6, 0.5 * len(table.predicates) + 2), max(4, 0.4 * len(table.groups) + 2))
    )
    xs, ys, colors, sizes = [], [], [], []
    for gi, g in enumerate(table.groups):
        for pi, p in enumerate(table.predicates):
            cell = table.cells.get((g, p))
            if cell is None:
                continue
            xs.append(pi)
            ys.append(gi)
            colors.append(cell.metric)
            sizes.append(40 + 600 * cell.weight)
    sc = ax.scatter(xs, ys, c=colors, s=sizes, cmap="RdYlGn_r", vmin=0.0, vmax=1.0, edgecolors="k", linewidths=0.4)
    ax.set_xticks(range(len(table.predicates)))
    ax.set_xticklabels(table.predicates, rotation=60, ha="right", fontsize=8)
    ax.set_yticks(range(len(table.groups)))
    ax.set_yticklabels([str(g) for g in table.groups], fontsize=8)
    ax.set_title(f"{table.statistic} rate by {table.dimension} and predicate")
    fig.colorbar(sc, ax=ax, label=f"{table.statistic} rate")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
