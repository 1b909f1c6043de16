"""Static SVG figures with reproducible bytes."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from ..tracking import TraceLog  # noqa: E402
from .experiments import CellSummary  # noqa: E402

_RC = {"svg.hashsalt": "zpmrrt", "svg.fonttype": "none"}
_METADATA = {"Date": None, "Creator": None}
_COLORS = {"zpmrrt": "tab:blue", "rrt": "tab:red", "tvlqr": "tab:orange"}


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata=_METADATA)
    plt.close(fig)
    return path


def emit_plots(cells: Sequence[CellSummary], out_dir, prefix: str = "") -> list[Path]:
    """One SVG per metric per scene: mean lines over translucent min/max bands."""
    if not cells:
        raise ValueError("no records to plot")
    out_dir = Path(out_dir)
    by_scene: dict[str, list[CellSummary]] = {}
    for c in cells:
        by_scene.setdefault(c.scene, []).append(c)
    written = []
    with plt.rc_context(_RC):
        for scene, group in by_scene.items():
            for metric, label in (("d", "base displacement [bodylengths]"),
                                  ("psi", "heading change [rad]")):
                fig, ax = plt.subplots(figsize=(5, 3.5))
                for c in group:
                    color = _COLORS.get(c.method, "tab:gray")
                    mean = getattr(c, f"mean_{metric}")
                    lo, hi = getattr(c, f"min_{metric}"), getattr(c, f"max_{metric}")
                    ax.fill_between(c.s, lo, hi, color=color, alpha=0.25, linewidth=0)
                    ax.plot(c.s, mean, color=color,
                            label=f"{c.method} ({c.successes}/{c.successes + c.failures})")
                ax.set_xlabel("path fraction")
                ax.set_ylabel(label)
                ax.set_title(f"{scene} ({group[0].obstacles} obstacles)")
                ax.legend(loc="upper left", fontsize="small")
                fig.tight_layout()
                written.append(_save(fig, out_dir / f"{prefix}delta_{metric}_{scene}.svg"))
    return written


def plot_tracking(logs: Mapping[str, TraceLog], path) -> Path:
    """Hand paths against targets, and base paths, for each controller."""
    if not logs:
        raise ValueError("no logs to plot")
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(1, len(logs), figsize=(5 * len(logs), 4), squeeze=False)
        for ax, (name, log) in zip(axes[0], logs.items()):
            ax.plot(log.target[:, 0], log.target[:, 1], color="0.6", lw=3, label="target")
            ax.plot(log.hand[:, 0], log.hand[:, 1], color="tab:blue", lw=1, label="hand")
            ax.plot(log.base.poses[:, 0], log.base.poses[:, 1], color="tab:red", label="base")
            ax.set_aspect("equal")
            ax.set_title(f"{name}: drift {log.final_drift:.2e}, rms {log.rms_error:.3f}")
            ax.legend(fontsize="small")
        fig.tight_layout()
        return _save(fig, Path(path))
