"""Matplotlib figure rendering for the report path.

Every figure goes to a file; no interactive backends. Diagonal cells of
similarity heatmaps are rescaled to the off-diagonal maximum for
perceivability only, matching the PGM heatmap rule; CSV artifacts always
carry true values.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from scipy.cluster import hierarchy

from .analysis import Dendrogram
from .model import Group
from .pairwise import SimilarityMatrix, split_key

_GROUP_COLORS = {
    Group.EXPERT: "tab:green",
    Group.STUDENT: "tab:red",
    Group.UNKNOWN: "tab:gray",
}


def _save(fig, path: str | Path) -> None:
    fig.savefig(Path(path), dpi=120)
    plt.close(fig)


def similarity_heatmap(
    m: SimilarityMatrix,
    path: str | Path,
    groups: dict[str, Group] | None = None,
) -> None:
    """Heatmap of a similarity matrix with group-colored tick labels."""
    n = len(m.keys)
    vals = m.values.astype(np.float64).copy()
    off = ~np.eye(n, dtype=bool)
    if n > 1:
        np.fill_diagonal(vals, vals[off].max())
    side = min(max(6.0, 0.16 * n + 2.0), 16.0)
    fig, ax = plt.subplots(figsize=(side, side))
    im = ax.imshow(vals, cmap="viridis", interpolation="nearest")
    fig.colorbar(im, ax=ax, shrink=0.8, label="normalized similarity")
    show_labels = n <= 80
    if show_labels:
        ax.set_xticks(range(n), m.keys, rotation=90, fontsize=5)
        ax.set_yticks(range(n), m.keys, fontsize=5)
        if groups:
            for tick in list(ax.get_xticklabels()) + list(ax.get_yticklabels()):
                key = tick.get_text()
                subject = split_key(key)[0] if "@" in key else key
                tick.set_color(_GROUP_COLORS.get(groups.get(subject), "black"))
    else:
        ax.set_xticks([])
        ax.set_yticks([])
    ax.set_title(f"{m.level.value}-level similarity (c={m.c:.6g}, {m.metric})")
    fig.tight_layout()
    _save(fig, path)


def dendrogram_figure(
    dend: Dendrogram,
    path: str | Path,
    groups: dict[str, Group] | None = None,
    cut_k: int | None = None,
) -> None:
    """Merge-tree rendering with group-colored leaf labels."""
    z = dend.linkage_array()
    width = min(max(6.0, 0.22 * len(dend.leaf_keys)), 18.0)
    fig, ax = plt.subplots(figsize=(width, 4.5))
    with plt.rc_context({"lines.linewidth": 1.0}):
        hierarchy.dendrogram(
            z,
            labels=list(dend.leaf_keys),
            ax=ax,
            color_threshold=(
                z[-(cut_k - 1), 2] if cut_k and cut_k > 1 and len(z) >= cut_k - 1 else 0
            ),
            leaf_font_size=6,
        )
    if groups:
        for tick in ax.get_xticklabels():
            key = tick.get_text()
            subject = split_key(key)[0] if "@" in key else key
            tick.set_color(_GROUP_COLORS.get(groups.get(subject), "black"))
    ax.set_ylabel("merge distance")
    fig.tight_layout()
    _save(fig, path)


def archetype_figure(
    ranking: list[tuple[str, int]],
    path: str | Path,
    groups: dict[str, Group] | None = None,
    top: int = 20,
) -> None:
    """Bar chart of reverse top-n frequencies for the leading scanpaths."""
    head = ranking[:top]
    keys = [k for k, _ in head]
    freqs = [f for _, f in head]
    colors = ["tab:blue"] * len(head)
    if groups:
        colors = [
            _GROUP_COLORS.get(groups.get(split_key(k)[0]), "tab:gray") for k in keys
        ]
    fig, ax = plt.subplots(figsize=(max(6.0, 0.4 * len(head)), 4.0))
    ax.bar(range(len(head)), freqs, color=colors)
    ax.set_xticks(range(len(head)), keys, rotation=90, fontsize=6)
    ax.set_ylabel("times in another scanpath's top-n")
    ax.set_title("archetype scanpaths")
    fig.tight_layout()
    _save(fig, path)


def score_matrix_figure(values: np.ndarray, path: str | Path) -> None:
    """Render one alignment's scoring matrix (backtrace inspection aid)."""
    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    im = ax.imshow(values, cmap="viridis", interpolation="nearest", origin="upper")
    fig.colorbar(im, ax=ax, shrink=0.8, label="cell score")
    ax.set_xlabel("scanpath B index")
    ax.set_ylabel("scanpath A index")
    fig.tight_layout()
    _save(fig, path)
