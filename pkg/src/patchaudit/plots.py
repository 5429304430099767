"""Matplotlib renderings of audit and sweep outputs, written to files.

Every figure here has a CSV or JSON counterpart; the plots exist so a
report directory is inspectable at a glance without external tooling.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .features import FeatureTable
from .forensics import AuditReport
from .perturb import RobustnessTable


def _class_colors(n: int):
    cmap = plt.get_cmap("tab10" if n <= 10 else "tab20")
    return [cmap(i % cmap.N) for i in range(n)]


def save_mean_rgb_scatter(table: FeatureTable, out_path, max_points_per_class: int = 2000) -> None:
    """2D projections (R-G, R-B, G-B) of per-image mean color, one color per class."""
    if table.schema != "mean-rgb-3":
        raise ValueError(f"expected a mean-rgb-3 table, got {table.schema!r}")
    colors = _class_colors(len(table.class_names))
    pairs = [(0, 1, "mean R", "mean G"), (0, 2, "mean R", "mean B"),
             (1, 2, "mean G", "mean B")]
    fig, axes = plt.subplots(1, 3, figsize=(13, 4.2), sharex=True, sharey=True)
    for ax, (i, j, xl, yl) in zip(axes, pairs):
        for c, name in enumerate(table.class_names):
            pts = table.values[table.labels == c]
            if not len(pts):
                continue
            pts = pts[:max_points_per_class]
            ax.scatter(pts[:, i], pts[:, j], s=4, alpha=0.35, color=colors[c],
                       label=name, linewidths=0)
        ax.set_xlabel(xl)
        ax.set_ylabel(yl)
        ax.set_xlim(0, 255)
        ax.set_ylim(0, 255)
    handles, labels = axes[0].get_legend_handles_labels()
    fig.legend(handles, labels, loc="upper center", ncol=min(len(labels), 9),
               markerscale=3, frameon=False, bbox_to_anchor=(0.5, 1.08))
    fig.tight_layout()
    fig.savefig(out_path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def save_class_histograms(report: AuditReport, out_path) -> None:
    """Grid of per-class average R/G/B histograms."""
    entries = report.color.entries
    if not entries:
        raise ValueError("audit report has no class entries to plot")
    bins = report.bins
    cols = min(3, len(entries))
    rows = (len(entries) + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(4 * cols, 2.6 * rows),
                             squeeze=False, sharex=True)
    centers = np.arange(bins)
    for k, entry in enumerate(entries):
        ax = axes[k // cols][k % cols]
        for ch, (channel, color) in enumerate(zip("RGB", ["tab:red", "tab:green", "tab:blue"])):
            block = entry.average_histogram[ch * bins:(ch + 1) * bins]
            ax.plot(centers, block, color=color, label=channel, linewidth=1.2)
        ax.set_title(f"{entry.class_name} (n={entry.count})", fontsize=9)
        ax.set_xlim(0, bins - 1)
    for k in range(len(entries), rows * cols):
        axes[k // cols][k % cols].axis("off")
    axes[0][0].legend(fontsize=8, frameon=False)
    fig.supxlabel("histogram bin")
    fig.supylabel("frequency")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def save_blockiness_summary(report: AuditReport, out_path) -> None:
    """Median blockiness per class with min/max whiskers and band boundaries."""
    rows = report.blockiness
    if not rows:
        raise ValueError("audit report has no blockiness rows to plot")
    x = np.arange(len(rows))
    medians = [r.median for r in rows]
    lower = [r.median - r.min for r in rows]
    upper = [r.max - r.median for r in rows]
    fig, ax = plt.subplots(figsize=(max(5, 0.9 * len(rows) + 2), 4))
    ax.bar(x, medians, color="tab:gray", alpha=0.8)
    ax.errorbar(x, medians, yerr=[lower, upper], fmt="none", ecolor="black",
                capsize=3, linewidth=1)
    for name, style in (("minor", ":"), ("moderate", "--"), ("severe", "-")):
        ax.axhline(report.calibration.boundaries[name], linestyle=style,
                   color="tab:red", linewidth=1, label=f"{name} boundary")
    ax.set_xticks(x)
    ax.set_xticklabels([r.class_name for r in rows], rotation=45, ha="right")
    ax.set_ylabel("blockiness score")
    ax.legend(fontsize=8, frameon=False)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def save_robustness_chart(table: RobustnessTable, out_path) -> None:
    """Accuracy deltas per perturbation, base at zero."""
    rows = table.rows[1:]
    x = np.arange(len(rows))
    deltas = [r.delta_accuracy for r in rows]
    fig, ax = plt.subplots(figsize=(max(5, 0.9 * len(rows) + 2), 4))
    ax.bar(x, deltas, color=["tab:orange" if r.perturbation.startswith("jpeg") else
                             "tab:purple" for r in rows])
    ax.axhline(0.0, color="black", linewidth=1)
    ax.set_xticks(x)
    ax.set_xticklabels([r.perturbation for r in rows], rotation=45, ha="right")
    ax.set_ylabel("accuracy delta vs base")
    ax.set_title(f"base accuracy {table.base.accuracy:.4f}")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
