"""Minimal static SVG line charts for curve series."""

from __future__ import annotations

from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .curves import CurveSeries

WIDTH, HEIGHT = 480, 360
MARGIN = 48
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

AXIS_LABELS = {
    "roc": ("FPR", "TPR"),
    "pr": ("TPR (recall)", "precision"),
    "rc_at_fpr": ("TPR (coverage)", "selective risk"),
    "ccr_fpr": ("FPR", "CCR"),
}


def _bounds(series: Sequence[CurveSeries]) -> tuple[float, float, float, float]:
    xs = np.concatenate([s.x for s in series if len(s)] or [np.zeros(1)])
    ys = np.concatenate([s.y for s in series if len(s)] or [np.zeros(1)])
    x0, x1 = min(0.0, float(xs.min())), max(1.0, float(xs.max()))
    y0, y1 = min(0.0, float(ys.min())), float(ys.max())
    if y1 <= y0:
        y1 = y0 + 1.0
    return x0, x1, y0, y1


def render(series: Sequence[CurveSeries], labels: Sequence[str], title: str = "") -> str:
    """Return a self-contained SVG document drawing each series as a polyline."""
    if len(series) != len(labels):
        raise ValueError("one label per series")
    x0, x1, y0, y1 = _bounds(series)
    pw, ph = WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN

    def px(x):
        return MARGIN + (x - x0) / (x1 - x0) * pw

    def py(y):
        return HEIGHT - MARGIN - (y - y0) / (y1 - y0) * ph

    kind = series[0].kind if series else "roc"
    xlab, ylab = AXIS_LABELS.get(kind, ("x", "y"))
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
    ]
    for t in np.linspace(0.0, 1.0, 6):
        xv, yv = x0 + t * (x1 - x0), y0 + t * (y1 - y0)
        out.append(f'<text x="{px(xv):.2f}" y="{HEIGHT - MARGIN + 14}" text-anchor="middle">{xv:.2g}</text>')
        out.append(f'<text x="{MARGIN - 4}" y="{py(yv) + 4:.2f}" text-anchor="end">{yv:.2g}</text>')
    out.append(f'<text x="{WIDTH / 2}" y="{HEIGHT - 10}" text-anchor="middle">{escape(xlab)}</text>')
    out.append(
        f'<text x="12" y="{HEIGHT / 2}" text-anchor="middle" '
        f'transform="rotate(-90 12 {HEIGHT / 2})">{escape(ylab)}</text>'
    )
    if title:
        out.append(f'<text x="{WIDTH / 2}" y="{MARGIN - 16}" text-anchor="middle">{escape(title)}</text>')
    for k, (s, label) in enumerate(zip(series, labels)):
        colour = PALETTE[k % len(PALETTE)]
        if len(s):
            pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in s.points)
            out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{pts}"/>')
        ly = MARGIN + 14 + 14 * k
        out.append(f'<line x1="{WIDTH - MARGIN - 110}" y1="{ly - 4}" x2="{WIDTH - MARGIN - 94}" '
                   f'y2="{ly - 4}" stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{WIDTH - MARGIN - 90}" y="{ly}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
