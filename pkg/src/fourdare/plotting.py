"""Figure rendering for attribution reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .model import DIMENSIONS  # noqa: E402
from .tracer import AttributionReport  # noqa: E402

# fired rule output, data shown without rules, data missing
_COLORS = {"fired": "#2b6cb0", "shown": "#a0aec0", "missing": "#ffffff"}


def _status(finding) -> str:
    if not finding.available:
        return "missing"
    return "fired" if finding.interpretations or finding.recommendations else "shown"


def plot_report(report: AttributionReport, path: str | Path) -> Path:
    """Lay the traced questions out in one lane per dimension and save a PNG."""
    path = Path(path)
    lanes = {d: [f for f in report.findings if f.dimension is d] for d in DIMENSIONS}
    width = max(4, max(len(v) for v in lanes.values()))
    fig, ax = plt.subplots(figsize=(1.6 * width + 2, 4.2), dpi=100)
    for row, dim in enumerate(DIMENSIONS):
        y = len(DIMENSIONS) - 1 - row
        for col, f in enumerate(lanes[dim]):
            status = _status(f)
            ax.scatter(col, y, s=900, c=_COLORS[status], edgecolors="#1a202c", linewidths=1.2, zorder=3)
            ax.annotate(f.question_id, (col, y), ha="center", va="center", fontsize=8, zorder=4,
                        color="white" if status == "fired" else "#1a202c")
            ax.annotate(f.label, (col, y - 0.34), ha="center", va="top", fontsize=7)
    for status, color in _COLORS.items():
        ax.scatter([], [], s=80, c=color, edgecolors="#1a202c", label=status)
    ax.set_yticks(range(len(DIMENSIONS)))
    ax.set_yticklabels([d.title for d in reversed(DIMENSIONS)])
    ax.set_xticks([])
    ax.set_xlim(-0.7, width - 0.3)
    ax.set_ylim(-0.8, len(DIMENSIONS) - 0.4)
    ax.set_title(f"{report.trigger} attribution trace, snapshot {report.snapshot_id}", fontsize=10)
    ax.legend(loc="upper right", fontsize=7, frameon=False, ncol=3)
    for side in ("top", "right", "bottom"):
        ax.spines[side].set_visible(False)
    fig.tight_layout()
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)
    return path
