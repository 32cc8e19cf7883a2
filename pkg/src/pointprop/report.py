"""Figure rendering for evaluation reports and perturbation studies.

Uses the Agg backend and writes files atomically, so figures can be dropped
next to CSV outputs by batch jobs without a display.
"""

import io

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .dataio import _atomic_write_bytes

_METRIC_NAMES = ("accuracy", "f1", "dice_obj", "aji")


def _save(fig, path):
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=120, bbox_inches="tight")
    plt.close(fig)
    _atomic_write_bytes(path, buf.getvalue())


def _instance_colors(ids):
    """Stable per-id colors; background stays white."""
    rgb = np.ones(ids.shape + (3,))
    cmap = plt.get_cmap("tab20")
    for i in np.unique(ids):
        if i == 0:
            continue
        rgb[ids == i] = cmap((int(i) - 1) % 20)[:3]
    return rgb


def save_eval_figure(report, path, gt=None, pred=None):
    """Bar chart of the four metrics, optionally flanked by instance views."""
    panels = 1 + (gt is not None) + (pred is not None)
    fig, axes = plt.subplots(1, panels, figsize=(4 * panels, 3.5))
    axes = np.atleast_1d(axes)
    ax = axes[0]
    values = [getattr(report, n) for n in _METRIC_NAMES]
    ax.bar(range(4), values, color="#4878a8")
    ax.set_xticks(range(4))
    ax.set_xticklabels(_METRIC_NAMES, rotation=20)
    ax.set_ylim(0, 1)
    ax.set_title("metrics")
    for i, v in enumerate(values):
        ax.text(i, v + 0.02, "%.3f" % v, ha="center", fontsize=8)
    k = 1
    for imap, name in ((gt, "ground truth"), (pred, "prediction")):
        if imap is None:
            continue
        axes[k].imshow(_instance_colors(imap.ids), interpolation="nearest")
        axes[k].set_title("%s (%d instances)" % (name, len(imap.instance_ids())))
        axes[k].axis("off")
        k += 1
    _save(fig, path)


def save_perturbation_figure(rows, path):
    """Line plot of study metrics against the perturbation shift."""
    shifts = [r["shift"] for r in rows]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(shifts, [r["in_nucleus_ratio"] for r in rows], "o-", label="in-nucleus ratio")
    if rows and "cluster_accuracy" in rows[0]:
        ax.plot(
            shifts, [r["cluster_accuracy"] for r in rows], "s-", label="cluster accuracy"
        )
    ax.set_xlabel("max shift (px)")
    ax.set_ylabel("fraction")
    ax.set_ylim(0, 1.05)
    ax.grid(alpha=0.3)
    ax.legend()
    _save(fig, path)
