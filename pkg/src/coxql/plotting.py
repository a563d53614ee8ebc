"""Figures for evaluation reports (headless; files only)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .eval import CATEGORY_ORDER, EvalReport  # noqa: E402

STRATEGY_ORDER = ("nn", "gd", "mp", "mp+")


def _strategies(reports: Sequence[EvalReport]) -> list[str]:
    seen = {r.strategy for r in reports}
    return [s for s in STRATEGY_ORDER if s in seen] + sorted(seen - set(STRATEGY_ORDER))


def accuracy_figure(reports: Sequence[EvalReport], path) -> Path:
    """Grouped bars: exact-match accuracy per backend and strategy."""
    backends = list(dict.fromkeys(r.backend for r in reports))
    strategies = _strategies(reports)
    lookup = {(r.backend, r.strategy): 100 * r.accuracy for r in reports}
    x = np.arange(len(backends))
    width = 0.8 / max(1, len(strategies))
    fig, ax = plt.subplots(figsize=(max(4.0, 1.6 * len(backends) + 2), 3.2))
    for i, s in enumerate(strategies):
        vals = [lookup.get((b, s), np.nan) for b in backends]
        ax.bar(x + (i - (len(strategies) - 1) / 2) * width, vals, width, label=s)
    ax.set_xticks(x)
    ax.set_xticklabels(backends, rotation=20, ha="right")
    ax.set_ylabel("exact match (%)")
    ax.set_ylim(0, 105)
    ax.legend(frameon=False, ncol=len(strategies), fontsize=8)
    ax.spines[["top", "right"]].set_visible(False)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def category_figure(reports: Sequence[EvalReport], path) -> Path:
    """Heatmap of category F1 (rows: backend/strategy, columns: category)."""
    cats = [c for c in CATEGORY_ORDER if any(c in r.per_category for r in reports)]
    labels = [f"{r.backend} / {r.strategy}" for r in reports]
    grid = np.full((len(reports), len(cats)), np.nan)
    for i, r in enumerate(reports):
        for j, c in enumerate(cats):
            if c in r.per_category:
                grid[i, j] = 100 * r.per_category[c].f1
    fig, ax = plt.subplots(figsize=(1.1 * len(cats) + 3, 0.45 * len(reports) + 1.8))
    im = ax.imshow(grid, vmin=0, vmax=100, cmap="viridis", aspect="auto")
    ax.set_xticks(range(len(cats)))
    ax.set_xticklabels(cats, rotation=30, ha="right", fontsize=8)
    ax.set_yticks(range(len(labels)))
    ax.set_yticklabels(labels, fontsize=8)
    for i in range(grid.shape[0]):
        for j in range(grid.shape[1]):
            if not np.isnan(grid[i, j]):
                ax.text(j, i, f"{grid[i, j]:.1f}", ha="center", va="center", fontsize=7,
                        color="white" if grid[i, j] < 60 else "black")
    fig.colorbar(im, ax=ax, label="F1 (%)")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def suite_figure(rows: Sequence[dict], path) -> Path:
    """Per-class share of affected questions restored by MP and MP+."""
    names = [r["class"] for r in rows]
    mp = [100 * r["mp"] / r["affected"] if r["affected"] else np.nan for r in rows]
    mpp = [100 * r["mp+"] / r["affected"] if r["affected"] else np.nan for r in rows]
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.bar(x - 0.2, mp, 0.4, label="mp")
    ax.bar(x + 0.2, mpp, 0.4, label="mp+")
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("exact gold (%)")
    ax.set_ylim(0, 105)
    ax.legend(frameon=False, fontsize=8)
    ax.spines[["top", "right"]].set_visible(False)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
