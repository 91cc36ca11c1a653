"""Report figures and atlas previews. Everything renders off-screen to files."""

from __future__ import annotations

from math import sqrt
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .atlas import MASK, OFFSET, ShapeAtlas  # noqa: E402

GOLDEN = (sqrt(5.0) - 1.0) / 2.0
FIG_WIDTH = 6.0

STYLE = {
    "figure.figsize": (FIG_WIDTH, FIG_WIDTH * GOLDEN),
    "figure.dpi": 110,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "xtick.direction": "in",
    "ytick.direction": "in",
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.25,
    "lines.linewidth": 1.4,
    "lines.markersize": 4,
}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    plt.close(fig)
    return path


def atlas_rgba(atlas: ShapeAtlas) -> np.ndarray:
    """uint8 image: offsets mapped affinely from [-1, 1] to [0, 255], mask as alpha."""
    rgb = (np.clip(atlas.data[..., OFFSET], -1.0, 1.0) + 1.0) * 127.5
    alpha = np.where(atlas.data[..., MASK] > 0.5, 255.0, 0.0)
    return np.rint(np.dstack([rgb, alpha])).astype(np.uint8)


def save_atlas_preview(path, atlas: ShapeAtlas):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    plt.imsave(path, atlas_rgba(atlas))
    return path


def plot_bench(path, dense: dict, sparse: dict, dense_slope: float, sparse_slope: float):
    """Log-log timing curves; ``dense``/``sparse`` map n to seconds."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for series, slope, marker, label in ((dense, dense_slope, "o", "dense"),
                                             (sparse, sparse_slope, "s", "sparse kNN")):
            if not series:
                continue
            n = np.array(sorted(series))
            t = np.array([series[k] for k in n])
            ax.loglog(n, t, marker=marker, label=f"{label} (slope {slope:.2f})")
        ax.set_xlabel("n")
        ax.set_ylabel("seconds")
        ax.legend()
        return _save(fig, path)


def plot_eval(path, categories: list, cd_l1: list, fscore: list, tau: float):
    """Per-category CD-L1 (x1000) and F-score bars side by side."""
    with plt.rc_context(STYLE):
        fig, (a, b) = plt.subplots(1, 2, figsize=(FIG_WIDTH * 1.4, FIG_WIDTH * GOLDEN))
        x = np.arange(len(categories))
        a.bar(x, np.asarray(cd_l1) * 1e3, color="0.35")
        a.set_ylabel("CD-L1 x 1e3")
        b.bar(x, fscore, color="tab:blue")
        b.set_ylabel(f"F-score @ {tau:g}")
        b.set_ylim(0, 1)
        for ax in (a, b):
            ax.set_xticks(x)
            ax.set_xticklabels(categories, rotation=30, ha="right")
        return _save(fig, path)


def plot_cd_histogram(path, values):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.hist(np.asarray(values) * 1e3, bins=min(30, max(5, len(values))), color="0.35")
        ax.set_xlabel("per-sample CD-L1 x 1e3")
        ax.set_ylabel("count")
        return _save(fig, path)
