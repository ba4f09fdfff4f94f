"""Minimal SVG line chart, so plots need no plotting library."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=70, right=20, top=30, bottom=50)


def _fmt(v: float) -> str:
    return f"{v:.3g}"


def line_chart_svg(xs, ys, *, title="", xlabel="", ylabel="", logx=False) -> str:
    pts = [(float(x), float(y)) for x, y in zip(xs, ys)
           if math.isfinite(x) and math.isfinite(y) and (not logx or x > 0)]
    if logx:
        pts = [(math.log10(x), y) for x, y in pts]
    if not pts:
        pts = [(0.0, 0.0)]
    x0, x1 = min(p[0] for p in pts), max(p[0] for p in pts)
    y0, y1 = min(p[1] for p in pts), max(p[1] for p in pts)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(x):
        return MARGIN["left"] + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return MARGIN["top"] + (1.0 - (y - y0) / (y1 - y0)) * ph

    poly = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
    xl = f"log10({xlabel})" if logx else xlabel
    bottom = MARGIN["top"] + ph
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" '
        'fill="none" stroke="black"/>',
        f'<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{poly}"/>',
        f'<text x="{MARGIN["left"]}" y="{bottom + 18}" font-size="11">{_fmt(x0)}</text>',
        f'<text x="{MARGIN["left"] + pw}" y="{bottom + 18}" text-anchor="end" font-size="11">{_fmt(x1)}</text>',
        f'<text x="{MARGIN["left"] - 5}" y="{bottom}" text-anchor="end" font-size="11">{_fmt(y0)}</text>',
        f'<text x="{MARGIN["left"] - 5}" y="{MARGIN["top"] + 10}" text-anchor="end" font-size="11">{_fmt(y1)}</text>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 10}" text-anchor="middle" font-size="12">{escape(xl)}</text>',
        f'<text x="15" y="{HEIGHT / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 15 {HEIGHT / 2})">{escape(ylabel)}</text>',
        "</svg>",
    ]
    return "\n".join(parts) + "\n"
