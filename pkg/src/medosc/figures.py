"""Figure rendering for check reports: ratio charts and sweep trend curves.

Figures are written as PNG files next to the delimited report output; all
rendering goes through the Agg backend so no display is needed.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .harness import CheckReport  # noqa: E402


def _finite_ratios(report: CheckReport) -> list[float]:
    out = []
    for row in report.instances:
        r = row.get("ratio", 0.0)
        if isinstance(r, (int, float)) and math.isfinite(r):
            out.append(float(r))
    return out


def render_report(report: CheckReport, out_dir: str | Path, stem: str | None = None) -> list[Path]:
    """Per-instance ratio chart and ratio histogram; returns created paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = stem or report.check
    ratios = _finite_ratios(report)
    paths: list[Path] = []
    if not ratios:
        return paths

    fig, ax = plt.subplots(figsize=(max(6, min(16, 0.35 * len(ratios))), 4))
    ax.plot(range(len(ratios)), ratios, "o", markersize=4, color="#1f6f8b")
    ax.axhline(report.max_ratio if math.isfinite(report.max_ratio) else max(ratios),
               color="#c0392b", linestyle="--", linewidth=1, label="max ratio")
    ax.set_xlabel("instance")
    ax.set_ylabel("ratio")
    ax.set_title(f"{report.check}: per-instance ratios")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    path = out_dir / f"{stem}-ratios.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    paths.append(path)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(ratios, bins=min(30, max(5, len(ratios) // 2)), color="#1f6f8b", edgecolor="white")
    ax.set_xlabel("ratio")
    ax.set_ylabel("count")
    ax.set_title(f"{report.check}: ratio distribution")
    fig.tight_layout()
    path = out_dir / f"{stem}-hist.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    paths.append(path)
    return paths


def render_sweep(report: CheckReport, out_dir: str | Path, stem: str | None = None) -> list[Path]:
    """Trend curves of the sweep's max ratio against its varying parameters."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = stem or report.check
    rows = [r for r in report.instances if "max_ratio" in r]
    if not rows:
        return []
    grid = report.params.get("grid", {})
    numeric_axes = [
        k
        for k, vals in grid.items()
        if len(vals) > 1 and all(isinstance(v, (int, float)) for v in vals)
    ]
    if not numeric_axes:
        return render_report(report, out_dir, stem)
    axis = max(numeric_axes, key=lambda k: len(grid[k]))
    others = [k for k in grid if k != axis]

    series: dict[tuple, list[tuple[float, float]]] = {}
    for row in rows:
        key = tuple((k, row.get(k)) for k in others)
        r = row.get("max_ratio", 0.0)
        if not (isinstance(r, (int, float)) and math.isfinite(r)):
            continue
        series.setdefault(key, []).append((float(row[axis]), float(r)))

    fig, ax = plt.subplots(figsize=(6, 4))
    for key, pts in sorted(series.items()):
        pts.sort()
        label = ",".join(f"{k}={v}" for k, v in key) or None
        ax.plot([p[0] for p in pts], [p[1] for p in pts], "o-", label=label)
    ax.set_xlabel(axis)
    ax.set_ylabel("max ratio")
    ax.set_title(f"{report.check}: max ratio vs {axis}")
    if others and len(series) > 1:
        ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    path = out_dir / f"{stem}-trend.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return [path]
