"""Figures written next to the CSV outputs of the CLI."""

from __future__ import annotations

from collections import defaultdict
from collections.abc import Sequence
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .grid import Image  # noqa: E402

__all__ = ["STYLE", "plot_before_after", "plot_metrics", "plot_scaling"]

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "xtick.direction": "in",
    "ytick.direction": "in",
    "axes.grid": True,
    "grid.alpha": 0.3,
    "figure.dpi": 120,
    "savefig.bbox": "tight",
}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_metrics(rows: Sequence, path: str | Path) -> Path:
    """Channel mean and per-step sup-norm change against step index."""
    by_channel = defaultdict(list)
    for r in rows:
        by_channel[r.channel].append(r)
    with plt.rc_context(STYLE):
        fig, (ax_m, ax_c) = plt.subplots(1, 2, figsize=(7, 2.8))
        for c, rs in sorted(by_channel.items()):
            steps = [r.step for r in rs]
            ax_m.plot(steps, [r.mean for r in rs], label=f"channel {c}")
            ax_c.semilogy(steps, [max(r.sup_change, 1e-300) for r in rs], label=f"channel {c}")
        ax_m.set_xlabel("step")
        ax_m.set_ylabel("mean")
        ax_m.ticklabel_format(useOffset=False, axis="y")
        ax_c.set_xlabel("step")
        ax_c.set_ylabel(r"$\|u^{k+1}-u^k\|_\infty$")
        ax_c.legend()
        fig.tight_layout()
        return _save(fig, path)


def plot_scaling(rows: Sequence, path: str | Path) -> Path:
    """Log-log total time against pixel count, one line per scheme."""
    by_scheme = defaultdict(list)
    for r in rows:
        by_scheme[r.scheme].append(r)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(3.6, 2.8))
        for scheme, rs in sorted(by_scheme.items()):
            px = np.array([r.pixels for r in rs], float)
            t = np.array([r.total_ms for r in rs]) / 1e3
            label = scheme
            if len(rs) > 1:
                slope = np.polyfit(np.log(px), np.log(t), 1)[0]
                label = f"{scheme} (slope {slope:.2f})"
            ax.loglog(px, t, "o-", label=label)
        ax.set_xlabel("pixels")
        ax.set_ylabel("total time [s]")
        ax.legend()
        return _save(fig, path)


def plot_before_after(before: Image, after: Image, path: str | Path, titles=("input", "output")) -> Path:
    """Side-by-side rendering, each panel normalized to the input's range."""
    lo, hi = float(before.data.min()), float(before.data.max())
    scale = (hi - lo) or 1.0
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(7, 3.6))
        for ax, img, title in zip(axes, (before, after), titles):
            a = np.clip((img.to_array() - lo) / scale, 0, 1)
            ax.imshow(a, cmap="gray" if a.ndim == 2 else None, vmin=0, vmax=1)
            ax.set_title(title)
            ax.set_axis_off()
        return _save(fig, path)
