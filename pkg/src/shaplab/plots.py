"""Self-contained SVG convergence plots (log-log MSE vs evaluation budget).

The writer is deliberately dependency-free and deterministic: the same
summary produces the same bytes, which keeps report directories
byte-reproducible. Exact methods (mse == 0) are drawn on a floor line at
1e-16 so they stay visible on the log axis.
"""

from __future__ import annotations

import math
import os

from .bench import read_summary
from .errors import DataError

MSE_FLOOR = 1e-16

_PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
    "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f",
)

_W, _H = 760, 480
_ML, _MR, _MT, _MB = 72, 220, 36, 56


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _pow10_ticks(lo: float, hi: float) -> list[int]:
    return list(range(math.floor(lo), math.ceil(hi) + 1))


def render_convergence_svg(series: dict[str, list[tuple[int, float]]], title: str) -> str:
    """Render one polyline per estimator variant; points are (budget, mse)."""
    if not any(series.values()):
        raise DataError("nothing to plot: no estimator has a computed error")
    xs = [math.log10(b) for pts in series.values() for b, _ in pts]
    ys = [math.log10(max(m, MSE_FLOOR)) for pts in series.values() for _, m in pts]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if x_hi - x_lo < 1e-9:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    if y_hi - y_lo < 1e-9:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    y_lo, y_hi = math.floor(y_lo), math.ceil(y_hi)

    plot_w = _W - _ML - _MR
    plot_h = _H - _MT - _MB

    def px(x: float) -> float:
        return _ML + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y: float) -> float:
        return _MT + (y_hi - y) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_ML}" y="20" font-family="sans-serif" font-size="14">{title}</text>',
        f'<rect x="{_ML}" y="{_MT}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="#333" stroke-width="1"/>',
    ]

    for t in _pow10_ticks(x_lo, x_hi):
        if not x_lo <= t <= x_hi:
            continue
        x = _fmt(px(t))
        parts.append(
            f'<line x1="{x}" y1="{_MT + plot_h}" x2="{x}" y2="{_MT + plot_h + 5}" stroke="#333"/>'
        )
        parts.append(
            f'<text x="{x}" y="{_MT + plot_h + 20}" font-family="sans-serif" '
            f'font-size="11" text-anchor="middle">1e{t}</text>'
        )
    for t in _pow10_ticks(y_lo, y_hi):
        if not y_lo <= t <= y_hi:
            continue
        y = _fmt(py(t))
        parts.append(f'<line x1="{_ML - 5}" y1="{y}" x2="{_ML}" y2="{y}" stroke="#333"/>')
        parts.append(
            f'<text x="{_ML - 8}" y="{y}" font-family="sans-serif" font-size="11" '
            f'text-anchor="end" dominant-baseline="middle">1e{t}</text>'
        )
    parts.append(
        f'<text x="{_ML + plot_w / 2:.1f}" y="{_H - 14}" font-family="sans-serif" '
        f'font-size="12" text-anchor="middle">game evaluations</text>'
    )
    parts.append(
        f'<text x="18" y="{_MT + plot_h / 2:.1f}" font-family="sans-serif" font-size="12" '
        f'text-anchor="middle" transform="rotate(-90 18 {_MT + plot_h / 2:.1f})">MSE</text>'
    )

    legend_y = _MT + 10
    for k, (label, pts) in enumerate(series.items()):
        if not pts:
            continue
        color = _PALETTE[k % len(_PALETTE)]
        coords = [(px(math.log10(b)), py(math.log10(max(m, MSE_FLOOR)))) for b, m in pts]
        if len(coords) > 1:
            path = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in coords)
            parts.append(
                f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>'
            )
        for x, y in coords:
            parts.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="3" fill="{color}"/>')
        lx = _ML + plot_w + 14
        parts.append(
            f'<line x1="{lx}" y1="{legend_y}" x2="{lx + 22}" y2="{legend_y}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{lx + 28}" y="{legend_y + 4}" font-family="sans-serif" '
            f'font-size="11">{label}</text>'
        )
        legend_y += 18

    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_plots(report_dir, out_path=None) -> str:
    """Build the convergence SVG for a completed report directory."""
    rows, stamp = read_summary(report_dir)
    series: dict[str, list[tuple[int, float]]] = {}
    for row in rows:
        label = f"{row['estimator']} ({row['variant']})"
        series.setdefault(label, [])
        if row["mse"] == "":
            continue
        series[label].append((int(row["budget"]), float(row["mse"])))
    svg = render_convergence_svg(series, "Estimation error vs evaluation budget")
    svg = svg.replace("<svg ", f"<!-- {stamp.lstrip('# ')} -->\n<svg ", 1)
    out_path = out_path or os.path.join(report_dir, "mse.svg")
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(svg)
    return out_path
