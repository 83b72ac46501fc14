"""Figure rendering for CLI reports. Everything is written to files (Agg backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def loss_curve(history, path, smooth: int = 25, title: str = "training loss"):
    """Per-iteration loss with a moving average on a log axis."""
    h = np.asarray(history, dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.0))
        it = np.arange(1, len(h) + 1)
        ax.plot(it, h, color="0.75", lw=0.8, label="batch")
        if len(h) >= smooth > 1:
            avg = np.convolve(h, np.ones(smooth) / smooth, mode="valid")
            ax.plot(it[smooth - 1:], avg, color="C0", lw=1.5, label=f"mean of {smooth}")
        if np.all(h > 0):
            ax.set_yscale("log")
        ax.set_xlabel("iteration")
        ax.set_ylabel("STFT loss")
        ax.set_title(title)
        ax.legend(frameon=False)
        _save(fig, path)


def energy_image(image, path, marker=None, title: str | None = None):
    """Equirectangular energy image; rows run from +90 to -90 degrees elevation.

    ``marker`` is an optional (azimuth_deg, elevation_deg) to annotate.
    """
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 3.2))
        im = ax.imshow(image, extent=(0, 360, -90, 90), aspect="auto", cmap="magma", origin="upper")
        if marker is not None:
            ax.plot(*marker, marker="+", color="cyan", ms=10, mew=1.5)
        ax.set_xlabel("azimuth (deg)")
        ax.set_ylabel("elevation (deg)")
        ax.set_xticks(range(0, 361, 90))
        ax.set_yticks(range(-90, 91, 45))
        if title:
            ax.set_title(title)
        fig.colorbar(im, ax=ax, label="relative energy")
        _save(fig, path)


def chunk_metrics(chunks: list[dict], path, title: str = "per-chunk metrics"):
    """One panel per metric, chunk time on the x axis."""
    t = [c["time"] for c in chunks]
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(3, 1, figsize=(5.0, 5.0), sharex=True)
        for ax, key, label in zip(axes, ("stft", "env", "emd"), ("STFT", "ENV", "EMD")):
            ax.plot(t, [c[key] for c in chunks], marker="o", ms=3, lw=1)
            ax.set_ylabel(label)
        axes[-1].set_xlabel("chunk center (s)")
        axes[0].set_title(title)
        _save(fig, path)
