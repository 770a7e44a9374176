"""Tiny SVG line-plot emitter.

Plots are a viewing convenience; the CSVs are the contract. This keeps the
package free of plotting dependencies: polylines, axes, tick labels, legend.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#7f7f7f"]


@dataclass(frozen=True)
class LineSeries:
    label: str
    x: list[float]
    y: list[float]


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** int(f"{raw:e}".split("e")[1])
    for mult in (1, 2, 5, 10):
        step = mult * mag
        if step >= raw:
            break
    first = step * (int(lo / step) + (0 if lo % step == 0 else 1)) if lo >= 0 else step * int(lo / step)
    ticks = []
    v = first
    while v <= hi + 1e-12 * max(1.0, abs(hi)):
        ticks.append(v)
        v += step
    return ticks or [lo]


def _fmt_tick(v: float, as_date: bool) -> str:
    if as_date:
        return dt.date.fromordinal(int(round(v))).isoformat()
    if abs(v) >= 10000:
        return f"{v:,.0f}"
    if v == int(v):
        return f"{int(v)}"
    return f"{v:g}"


def line_plot_svg(
    path,
    series: list[LineSeries],
    title: str = "",
    x_is_date: bool = True,
    width: int = 960,
    height: int = 400,
) -> None:
    """Write one SVG with a polyline per series, shared axes and a legend."""
    margin_l, margin_r, margin_t, margin_b = 80, 20, 40, 50
    plot_w = width - margin_l - margin_r
    plot_h = height - margin_t - margin_b
    xs = [v for s in series for v in s.x]
    ys = [v for s in series for v in s.y]
    if not xs:
        raise ValueError("nothing to plot")
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if x_hi == x_lo:
        x_hi = x_lo + 1
    if y_hi == y_lo:
        y_hi = y_lo + 1
    pad = 0.05 * (y_hi - y_lo)
    y_lo -= pad
    y_hi += pad

    def sx(v: float) -> float:
        return margin_l + (v - x_lo) / (x_hi - x_lo) * plot_w

    def sy(v: float) -> float:
        return margin_t + (y_hi - v) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>'
        )
    # frame
    parts.append(
        f'<rect x="{margin_l}" y="{margin_t}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="#444" stroke-width="1"/>'
    )
    for tick in _nice_ticks(y_lo, y_hi):
        y = sy(tick)
        parts.append(
            f'<line x1="{margin_l}" y1="{y:.1f}" x2="{margin_l + plot_w}" y2="{y:.1f}" '
            f'stroke="#ddd" stroke-width="0.5"/>'
        )
        parts.append(
            f'<text x="{margin_l - 6}" y="{y + 3:.1f}" text-anchor="end">{_fmt_tick(tick, False)}</text>'
        )
    for tick in _nice_ticks(x_lo, x_hi, 6):
        x = sx(tick)
        parts.append(
            f'<line x1="{x:.1f}" y1="{margin_t + plot_h}" x2="{x:.1f}" y2="{margin_t + plot_h + 4}" '
            f'stroke="#444" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{x:.1f}" y="{margin_t + plot_h + 16}" text-anchor="middle">'
            f"{_fmt_tick(tick, x_is_date)}</text>"
        )
    for idx, s in enumerate(series):
        color = _PALETTE[idx % len(_PALETTE)]
        points = " ".join(f"{sx(px):.2f},{sy(py):.2f}" for px, py in zip(s.x, s.y))
        parts.append(
            f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        lx = margin_l + 10
        ly = margin_t + 14 + 16 * idx
        parts.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{lx + 24}" y="{ly}">{s.label}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts))
