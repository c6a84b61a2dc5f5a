"""SVG figures for run reports."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed element ids and no date stamp, so identical inputs give identical files
matplotlib.rcParams["svg.hashsalt"] = "rrls"
_SVG_META = {"Date": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return path


def plot_training_bands(bands: Mapping[str, tuple[np.ndarray, np.ndarray, np.ndarray]], path,
                        title: str = "Training curves") -> Path:
    """One mean line with a +/- std band per algorithm."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for name, (x, mean, std) in bands.items():
        line, = ax.plot(x, mean, label=name)
        ax.fill_between(x, mean - std, mean + std, color=line.get_color(), alpha=0.2, linewidth=0)
    ax.set_xlabel("environment steps")
    ax.set_ylabel("mean return")
    ax.set_title(title)
    if bands:
        ax.legend(loc="best")
    fig.tight_layout()
    return _save(fig, path)


def plot_cell_heatmap(cell_params: Sequence[Sequence[float]], cell_means: Sequence[float],
                      param_names: Sequence[str], path, title: str = "Mean return per cell") -> Path:
    """Heatmap of per-cell means for a two-parameter mesh."""
    params = np.asarray(cell_params, dtype=float)
    if params.ndim != 2 or params.shape[1] != 2:
        raise ValueError("heatmap needs a two-parameter mesh")
    xs, ys = np.unique(params[:, 0]), np.unique(params[:, 1])
    grid = np.full((ys.size, xs.size), np.nan)
    for (px, py), m in zip(params, cell_means):
        grid[np.searchsorted(ys, py), np.searchsorted(xs, px)] = m
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    im = ax.imshow(grid, origin="lower", aspect="auto", cmap="viridis",
                   extent=(xs[0], xs[-1], ys[0], ys[-1]) if xs.size > 1 and ys.size > 1 else None)
    fig.colorbar(im, ax=ax, label="mean return")
    ax.set_xlabel(param_names[0])
    ax.set_ylabel(param_names[1])
    ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)
