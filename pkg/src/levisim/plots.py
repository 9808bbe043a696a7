"""Optional, dependency-free SVG line plots for the emitted CSV panels.

The core pipeline only writes plot-ready CSVs; this helper turns one of
them into a simple log-log SVG for a quick look without bringing in a
plotting stack.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b")


def _read_columns(csv_path):
    with open(csv_path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    header, body = rows[0], rows[1:]
    columns = {name: [] for name in header}
    for row in body:
        for name, cell in zip(header, row):
            try:
                columns[name].append(float(cell))
            except ValueError:
                columns[name].append(math.nan)
    return header, columns


def svg_line_plot(csv_path, out_path, x_column: str | None = None,
                  width: int = 640, height: int = 440,
                  log_x: bool = True, log_y: bool = True) -> Path:
    """Render every numeric column of a panel CSV against its first column."""
    header, columns = _read_columns(csv_path)
    x_name = x_column or header[0]
    x_raw = columns[x_name]
    series = [(name, columns[name]) for name in header
              if name != x_name and any(math.isfinite(v) for v in columns[name])]
    if not series:
        raise ValueError(f"{csv_path} has no plottable columns")

    def tx(v):
        return math.log10(v) if log_x else v

    def ty(v):
        return math.log10(v) if log_y else v

    xs = [tx(v) for v in x_raw if math.isfinite(v) and (v > 0 or not log_x)]
    ys = [ty(v) for _, col in series for v in col
          if math.isfinite(v) and (v > 0 or not log_y)]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    x_pad = 0.05 * (x_hi - x_lo or 1.0)
    y_pad = 0.05 * (y_hi - y_lo or 1.0)
    x_lo, x_hi = x_lo - x_pad, x_hi + x_pad
    y_lo, y_hi = y_lo - y_pad, y_hi + y_pad
    margin = 50

    def px(v):
        return margin + (tx(v) - x_lo) / (x_hi - x_lo) * (width - 2 * margin)

    def py(v):
        return height - margin - (ty(v) - y_lo) / (y_hi - y_lo) * (height - 2 * margin)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}" font-family="monospace" font-size="11">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<rect x="{margin}" y="{margin}" width="{width - 2 * margin}" '
             f'height="{height - 2 * margin}" fill="none" stroke="#333"/>']
    for k, (name, col) in enumerate(series):
        pts = [(px(x), py(y)) for x, y in zip(x_raw, col)
               if math.isfinite(x) and math.isfinite(y)
               and (x > 0 or not log_x) and (y > 0 or not log_y)]
        if not pts:
            continue
        color = _COLORS[k % len(_COLORS)]
        path = " ".join(f"{'M' if i == 0 else 'L'}{x:.1f},{y:.1f}"
                        for i, (x, y) in enumerate(pts))
        parts.append(f'<path d="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for x, y in pts:
            parts.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="2.5" fill="{color}"/>')
        parts.append(f'<text x="{width - margin - 150}" y="{margin + 14 + 14 * k}" '
                     f'fill="{color}">{name}</text>')
    scale = "log-log" if log_x and log_y else "linear"
    parts.append(f'<text x="{margin}" y="{height - 12}">{x_name} ({scale})</text>')
    parts.append("</svg>")
    out_path = Path(out_path)
    out_path.write_text("\n".join(parts))
    return out_path
