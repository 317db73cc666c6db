"""Report figures. Rendered headless straight to files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_STYLE = {"hash": ("C0", "o"), "brute": ("C3", "s"), "knn": ("C2", "^")}


def plot_scaling(report: dict, path, title="query time vs. voxel count"):
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    for method, (color, marker) in _STYLE.items():
        rows = [r for r in report["rows"] if r["method"] == method]
        if not rows:
            continue
        n = np.array([r["n"] for r in rows])
        t = np.array([r["median_s"] for r in rows])
        slope = report.get("slopes", {}).get(method)
        label = method if slope is None else f"{method} (slope {slope:.2f})"
        ax.loglog(n, t, marker=marker, color=color, label=label)
    ax.set_xlabel("current voxels N (history M = %dN)" % report.get("m_factor", 3))
    ax.set_ylabel("median wall time [s]")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_scores(scores, threshold, path):
    """Histogram of context scores with the activation threshold marked."""
    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    scores = np.asarray(scores)
    ax.hist(scores, bins=50, range=(0.0, 1.0), color="0.4")
    ax.axvline(threshold, color="C3", ls="--", label=f"threshold {threshold:g}")
    ax.set_xlabel("context score")
    ax.set_ylabel("voxels")
    kept = int(np.count_nonzero(scores > threshold))
    ax.set_title(f"{kept} of {len(scores)} context voxels above threshold")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
