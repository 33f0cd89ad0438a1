"""Minimal static SVG line plots (polylines, axes, ticks, legend)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["Series", "line_plot"]

_COLORS = ("#1f4e9c", "#c0392b", "#2e8b57", "#7f7f7f", "#8e44ad")
WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=70, right=20, top=40, bottom=50)


@dataclass
class Series:
    x: np.ndarray
    y: np.ndarray
    label: str
    dashed: bool = False
    markers: bool = False


def _ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    step = 10 ** math.floor(math.log10((hi - lo) / n))
    for mult in (1, 2, 5, 10):
        if (hi - lo) / (step * mult) <= n:
            step *= mult
            break
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int((hi - start) / step + 1e-9) + 1)]


def _fmt(v, log):
    if log:
        return f"1e{v:g}" if float(v).is_integer() else f"{10**v:.3g}"
    return f"{v:.4g}"


def line_plot(path, series, title="", xlabel="", ylabel="", logx=False, logy=False, timestamp: str | None = None) -> Path:
    """Write ``series`` as an SVG figure; log axes plot ``log10`` of the data."""
    tx = (lambda v: np.log10(v)) if logx else (lambda v: v)
    ty = (lambda v: np.log10(v)) if logy else (lambda v: v)
    data = [(tx(np.asarray(s.x, float)), ty(np.asarray(s.y, float)), s) for s in series]
    xs = np.concatenate([d[0] for d in data])
    ys = np.concatenate([d[1] for d in data])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    pad = 0.05 * (y1 - y0) if y1 > y0 else 0.5
    y0, y1 = y0 - pad, y1 + pad
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(v):
        return MARGIN["left"] + (v - x0) / (x1 - x0) * pw

    def py(v):
        return MARGIN["top"] + (y1 - v) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
    ]
    if timestamp:
        out.append(f"<!-- generated {escape(timestamp)} -->")
    out.append(f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>')
    left, top, bottom, right = MARGIN["left"], MARGIN["top"], HEIGHT - MARGIN["bottom"], WIDTH - MARGIN["right"]
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    for v in _ticks(x0, x1):
        out.append(f'<line x1="{px(v):.2f}" y1="{bottom}" x2="{px(v):.2f}" y2="{bottom + 5}" stroke="black"/>')
        out.append(f'<text x="{px(v):.2f}" y="{bottom + 18}" font-size="11" text-anchor="middle">{_fmt(v, logx)}</text>')
    for v in _ticks(y0, y1):
        out.append(f'<line x1="{left - 5}" y1="{py(v):.2f}" x2="{left}" y2="{py(v):.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{py(v) + 4:.2f}" font-size="11" text-anchor="end">{_fmt(v, logy)}</text>')
    if title:
        out.append(f'<text x="{WIDTH / 2}" y="22" font-size="14" text-anchor="middle">{escape(title)}</text>')
    if xlabel:
        out.append(f'<text x="{left + pw / 2}" y="{HEIGHT - 12}" font-size="12" text-anchor="middle">{escape(xlabel)}</text>')
    if ylabel:
        out.append(
            f'<text x="16" y="{top + ph / 2}" font-size="12" text-anchor="middle" '
            f'transform="rotate(-90 16 {top + ph / 2})">{escape(ylabel)}</text>'
        )
    for i, (x, y, s) in enumerate(data):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
        dash = ' stroke-dasharray="6,4"' if s.dashed else ""
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>')
        if s.markers:
            out.extend(f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="3" fill="{color}"/>' for a, b in zip(x, y))
        ly = top + 16 + 16 * i
        out.append(f'<line x1="{right - 150}" y1="{ly}" x2="{right - 120}" y2="{ly}" stroke="{color}" stroke-width="1.5"{dash}/>')
        out.append(f'<text x="{right - 114}" y="{ly + 4}" font-size="11">{escape(s.label)}</text>')
    out.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(out) + "\n")
    return path
