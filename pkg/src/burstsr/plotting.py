"""Figures written next to the CLI's text reports."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_trace(trace, path, title: str = "") -> None:
    """Energy terms, step size and registration error per iteration."""
    t = np.arange(len(trace))
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    ax = axes[0]
    ax.semilogy(t, np.maximum(trace.data, 1e-300), label="data")
    ax.semilogy(t, np.maximum(trace.coupling, 1e-300), label="coupling")
    ax.semilogy(t, np.maximum(trace.energy_after_z, 1e-300), "k--", lw=0.8, label="data + coupling")
    ax.set_xlabel("iteration")
    ax.set_ylabel("energy")
    ax.legend(frameon=False, fontsize=8)
    ax = axes[1]
    geom = [trace.mean_geom(i) for i in range(len(trace))]
    if any(g is not None for g in geom):
        ax.plot(t, [np.nan if g is None else g for g in geom], "o-", ms=3)
        ax.set_ylabel("mean geometric error (LR px)")
    else:
        ax.semilogy(t, trace.mu, "o-", ms=3)
        ax.set_ylabel("mu")
    ax.set_xlabel("iteration")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_breakdown(parts: dict, path, title: str = "") -> None:
    """Horizontal bar chart of per-iteration time shares in percent."""
    names = list(parts)
    vals = [parts[n] for n in names]
    fig, ax = plt.subplots(figsize=(5, 0.6 + 0.4 * len(names)))
    ax.barh(names, vals, color="0.4")
    for i, v in enumerate(vals):
        ax.text(v, i, f" {v:.1f}%", va="center", fontsize=8)
    ax.set_xlim(0, 110)
    ax.set_xlabel("share of iteration time (%)")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_comparison(images: dict, path) -> None:
    """Side-by-side panels of planar images clipped to [0, 1]."""
    fig, axes = plt.subplots(1, len(images), figsize=(3 * len(images), 3.2))
    axes = np.atleast_1d(axes)
    for ax, (name, img) in zip(axes, images.items()):
        img = np.clip(np.asarray(img), 0, 1)
        if img.shape[0] == 1:
            ax.imshow(img[0], cmap="gray", vmin=0, vmax=1)
        else:
            ax.imshow(np.moveaxis(img, 0, -1))
        ax.set_title(name, fontsize=9)
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
