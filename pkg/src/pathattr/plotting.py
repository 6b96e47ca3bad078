"""Matplotlib figures written next to the CSV/JSON report outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
}

# IG-family rows share a hue; the IDGI variant is the solid line
_COLORS = {"IG": "tab:red", "GIG": "tab:green", "BlurIG": "tab:purple", "VG": "tab:gray"}


def _style(label: str) -> dict:
    base = label.split("+")[0]
    return {"color": _COLORS.get(base, "black"), "linestyle": "-" if label.endswith("+IDGI") else "--"}


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def plot_curves(curves: dict, path, title: str, xlabel: str, ylabel: str) -> None:
    """One line per method; ``curves`` maps label -> (xs, ys, auc)."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.2, 3.2))
        for label in sorted(curves):
            xs, ys, auc = curves[label]
            ax.plot(xs, ys, label=f"{label} ({auc:.3f})", **_style(label))
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        ax.set_xlim(0, 1)
        ax.legend(loc="best", frameon=False)
        _save(fig, path)


def plot_histogram(levels: dict, path, bins: int, title: str) -> None:
    """Bokeh information-level distribution per information measure."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.2, 3.0))
        edges = np.linspace(0, 1, bins + 1)
        for name in sorted(levels):
            ax.hist(levels[name], bins=edges, histtype="step", label=name)
        ax.set_xlabel("information level")
        ax.set_ylabel("bokeh images")
        ax.set_title(title)
        ax.legend(frameon=False)
        _save(fig, path)


def plot_comparison(table: dict, metrics: list[str], path) -> None:
    """Grouped bars: one group per metric, one bar per method row."""
    labels = sorted(table)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(max(4.0, 1.1 * len(metrics) + 2), 3.2))
        width = 0.8 / max(len(labels), 1)
        x = np.arange(len(metrics))
        for k, label in enumerate(labels):
            vals = [table[label].get(mt, np.nan) for mt in metrics]
            st = _style(label)
            ax.bar(x + k * width, vals, width, label=label, color=st["color"],
                   alpha=1.0 if label.endswith("+IDGI") else 0.45)
        ax.set_xticks(x + 0.4 - width / 2)
        ax.set_xticklabels(metrics, rotation=20, ha="right")
        ax.legend(frameon=False, ncol=2)
        _save(fig, path)


def plot_heatmap_panel(image: np.ndarray, maps: dict, path) -> None:
    """Input image followed by |channel-sum| heatmaps of each attribution."""
    with plt.rc_context(_RC):
        n = len(maps) + 1
        fig, axes = plt.subplots(1, n, figsize=(1.6 * n, 1.9))
        img = image[:, :, 0] if image.shape[2] == 1 else image
        axes[0].imshow(np.clip(img, 0, 1), cmap="gray" if image.shape[2] == 1 else None)
        axes[0].set_title("input")
        for ax, label in zip(axes[1:], sorted(maps)):
            ax.imshow(np.abs(maps[label].sum(axis=2)), cmap="gray")
            ax.set_title(label)
        for ax in axes:
            ax.set_axis_off()
        _save(fig, path)
