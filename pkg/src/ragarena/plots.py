"""Figure rendering for the report stages.

Each report command saves a PNG next to its delimited output: a win-rate
heatmap, an Elo ranking bar chart with dispersion, a grouped MRR bar chart,
and a Bland-Altman scatter with bias and limit-of-agreement lines.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .stats import BlandAltmanResult
from .tournament import EloReport, WinRateMatrix

FIG_DPI = 150


def save_winrate_heatmap(matrix: WinRateMatrix, path: str | Path) -> None:
    agents = list(matrix.agents)
    n = len(agents)
    grid = np.full((n, n), np.nan)
    for i, r in enumerate(agents):
        for j, c in enumerate(agents):
            if r != c and matrix.win_pct[(r, c)] is not None:
                grid[i, j] = matrix.win_pct[(r, c)]
    fig, ax = plt.subplots(figsize=(1.2 * n + 2, 1.0 * n + 1.5))
    im = ax.imshow(grid, cmap="viridis", vmin=0, vmax=100)
    ax.set_xticks(range(n), agents, rotation=45, ha="right")
    ax.set_yticks(range(n), agents)
    for i in range(n):
        for j in range(n):
            if not np.isnan(grid[i, j]):
                ax.text(j, i, f"{grid[i, j]:.1f}", ha="center", va="center",
                        color="white" if grid[i, j] < 60 else "black", fontsize=8)
    ax.set_title("Win rate of row agent vs column agent (%)")
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=FIG_DPI)
    plt.close(fig)


def save_elo_figure(report: EloReport, path: str | Path) -> None:
    agents = report.order()
    means = [report.ratings[a][0] for a in agents]
    stds = [report.ratings[a][1] for a in agents]
    fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(agents)), 4))
    ax.bar(range(len(agents)), means, yerr=stds, capsize=4, color="tab:blue")
    ax.set_xticks(range(len(agents)), agents, rotation=45, ha="right")
    ax.set_ylabel("mean rating")
    ax.set_title(f"Elo ratings over {report.config.n_tournaments} shuffled tournaments")
    ax.axhline(report.config.initial_rating, color="grey", linestyle="--", linewidth=1)
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=FIG_DPI)
    plt.close(fig)


def save_mrr_figure(rows: Sequence[dict], path: str | Path) -> None:
    agents = sorted({row["agent"] for row in rows})
    categories = sorted({row["category"] for row in rows})
    by_key = {(row["agent"], row["category"]): row["mrr"] for row in rows}
    x = np.arange(len(agents))
    width = 0.8 / max(len(categories), 1)
    fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(agents)), 4))
    for k, category in enumerate(categories):
        values = [by_key.get((agent, category), 0.0) for agent in agents]
        ax.bar(x + k * width, values, width, label=category)
    ax.set_xticks(x + width * (len(categories) - 1) / 2, agents, rotation=45, ha="right")
    ax.set_ylim(0, 1)
    ax.set_ylabel("MRR")
    ax.set_title("Mean reciprocal rank of the first relevant passage")
    ax.legend(fontsize=8)
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=FIG_DPI)
    plt.close(fig)


def save_bland_altman_figure(result: BlandAltmanResult, path: str | Path) -> None:
    means = [p[0] for p in result.points]
    diffs = [p[1] for p in result.points]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.scatter(means, diffs, alpha=0.5, s=18)
    ax.axhline(result.bias, color="tab:blue", linestyle="-", linewidth=1,
               label=f"bias = {result.bias:.3f}")
    ax.axhline(result.loa_low, color="tab:red", linestyle="--", linewidth=1,
               label=f"limits [{result.loa_low:.3f}, {result.loa_high:.3f}]")
    ax.axhline(result.loa_high, color="tab:red", linestyle="--", linewidth=1)
    ax.set_xlabel("mean of the two ratings")
    ax.set_ylabel("difference (first - second)")
    ax.set_title("Rater agreement")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=FIG_DPI)
    plt.close(fig)
