"""Report emission: per-instance CSV, aggregate JSON, occlusion SVG charts.

Everything written here is byte-deterministic for a given report: floats are
rendered with ``repr`` (shortest round-trip form), JSON keys are sorted, and
the SVG markup is assembled from fixed templates. Re-running on identical
input produces identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import AggregateMismatch, IoError
from .harness import (
    EVAL_COLUMNS,
    OCCLUSION_COLUMNS,
    SELECTION_COLUMNS,
    Report,
    compute_aggregates,
)
from .metrics import occlusion_bin_label

_COLUMNS = {
    "eval": EVAL_COLUMNS,
    "selection": SELECTION_COLUMNS,
    "occlusion": OCCLUSION_COLUMNS,
}


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(float(value))
    if isinstance(value, (tuple, list)):
        return ";".join(_cell(v) for v in value)
    return str(value)


def write_rows_csv(report: Report, path: Path) -> None:
    columns = _COLUMNS[report.kind]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in report.rows:
            writer.writerow([_cell(row[c]) for c in columns])


def bar_chart_svg(title: str, labels: list[str], values: list[float],
                  value_format: str = "{:.4g}") -> str:
    """Standalone SVG bar chart, one bar per label."""
    width, height = 480, 300
    margin, base = 40, 240
    plot_w = width - 2 * margin
    top = max([v for v in values if v is not None] + [0.0]) or 1.0
    n = max(len(labels), 1)
    bar_w = plot_w / n * 0.6
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="15">{title}</text>',
        f'<line x1="{margin}" y1="{base}" x2="{width - margin}" y2="{base}" '
        f'stroke="black" stroke-width="1"/>',
    ]
    for i, (label, value) in enumerate(zip(labels, values)):
        cx = margin + plot_w * (i + 0.5) / n
        v = 0.0 if value is None else float(value)
        h = 0.0 if top == 0 else 180.0 * v / top
        x = cx - bar_w / 2
        parts.append(
            f'<rect x="{x:.2f}" y="{base - h:.2f}" width="{bar_w:.2f}" '
            f'height="{h:.2f}" fill="#6a5acd"/>')
        parts.append(
            f'<text x="{cx:.2f}" y="{base - h - 6:.2f}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12">{value_format.format(v)}</text>')
        parts.append(
            f'<text x="{cx:.2f}" y="{base + 18:.2f}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _occlusion_charts(report: Report) -> dict[str, str]:
    labels = [occlusion_bin_label(b) for b in range(4)]
    per_bin = report.aggregates.get("per_occlusion_bin", {})
    counts = [float(per_bin.get(lb, {}).get("count", 0)) for lb in labels]
    charts = {
        "occlusion_counts.svg": bar_chart_svg(
            "Instances per occlusion bin", labels, counts, "{:.0f}"),
    }
    if report.kind == "eval":
        add = [per_bin.get(lb, {}).get("add_sb_mean") for lb in labels]
        charts["occlusion_add_sb.svg"] = bar_chart_svg(
            "Mean ADD-SB per occlusion bin", labels, add)
    return charts


def emit_report(report: Report, out_dir) -> list[Path]:
    """Write a report to ``out_dir``; returns the paths written.

    Aggregates are recomputed from the rows and must match the report's own
    (:class:`AggregateMismatch` otherwise), so emitted aggregates can never
    drift from the row data.
    """
    recomputed = compute_aggregates(report.kind, report.rows)
    if recomputed != report.aggregates:
        raise AggregateMismatch("report aggregates do not match its rows")

    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        written = []
        csv_path = out_dir / "per_instance.csv"
        write_rows_csv(report, csv_path)
        written.append(csv_path)

        agg_path = out_dir / "aggregates.json"
        agg_path.write_text(json.dumps(report.aggregates, sort_keys=True, indent=2) + "\n")
        written.append(agg_path)

        if report.kind in ("eval", "occlusion"):
            for name, svg in _occlusion_charts(report).items():
                path = out_dir / name
                path.write_text(svg)
                written.append(path)
        return written
    except OSError as e:
        raise IoError(f"failed to write report under {out_dir}: {e}") from e
