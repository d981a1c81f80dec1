"""Report figures rendered to files next to the JSON/JSONL outputs."""
from __future__ import annotations

from pathlib import Path
from typing import Any, Mapping

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def render_accuracy_figure(report: Mapping[str, Any], path: str | Path) -> Path:
    """Per-run strict and L1 accuracy bars with mean lines."""
    strict = report["per_run"]["strict"]
    l1 = report["per_run"]["l1"]
    runs = range(1, len(strict) + 1)
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    width = 0.38
    ax.bar([r - width / 2 for r in runs], strict, width, label="Strict-Acc", color="#4c72b0")
    ax.bar([r + width / 2 for r in runs], l1, width, label="L1-Acc", color="#55a868")
    ax.axhline(report["strict_acc"]["mean"], color="#4c72b0", ls="--", lw=1)
    ax.axhline(report["l1_acc"]["mean"], color="#55a868", ls="--", lw=1)
    ax.set_xlabel("run")
    ax.set_ylabel("accuracy (%)")
    ax.set_ylim(0, 105)
    ax.set_xticks(list(runs))
    ax.set_title(f"Traversal accuracy over {len(strict)} runs (judge: {report['judge']})")
    ax.legend(loc="lower right")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_citation_figure(coherence: Mapping[str, Any], path: str | Path) -> Path:
    """Intra- vs inter-cluster citation counts."""
    intra, inter = coherence["intra"], coherence["inter"]
    total = intra + inter
    fig, ax = plt.subplots(figsize=(4.8, 4.0))
    bars = ax.bar(["same top cluster", "different"], [intra, inter],
                  color=["#4c72b0", "#55a868"])
    for bar, count in zip(bars, (intra, inter)):
        share = f" ({100 * count / total:.1f}%)" if total else ""
        ax.annotate(f"{count}{share}", (bar.get_x() + bar.get_width() / 2, bar.get_height()),
                    ha="center", va="bottom", fontsize=9)
    ax.set_ylabel("citation edges")
    ax.set_title("Citation coherence across top-level clusters")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_structure_figure(stats: Mapping[str, Any], path: str | Path) -> Path:
    """Nodes per layer for a built hierarchy."""
    widths = stats["layer_widths"]
    layers = sorted(widths, key=int)
    counts = [widths[l] for l in layers]
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.bar(layers, counts, color="#4c72b0")
    for x, count in zip(layers, counts):
        ax.annotate(str(count), (x, count), ha="center", va="bottom", fontsize=9)
    ax.set_xlabel("layer")
    ax.set_ylabel("clusters")
    ax.set_title(f"Layer widths (depth {stats['depth']}, "
                 f"avg branching {stats['avg_branching']:.1f})")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
