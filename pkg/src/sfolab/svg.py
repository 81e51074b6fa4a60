"""Byte-stable SVG log-log plots, written by hand so output depends only on the data."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
WIDTH, HEIGHT = 640, 440
MARGIN = dict(left=80, right=130, top=40, bottom=60)


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _decades(lo: float, hi: float) -> list[int]:
    return list(range(math.floor(lo), math.ceil(hi) + 1))


def loglog_svg(series: dict[str, list[tuple[float, float]]], title: str,
               xlabel: str = "κ", ylabel: str = "1/rate") -> str:
    """One polyline per series; points with non-positive or non-finite coordinates are dropped."""
    clean = {}
    for name in sorted(series):
        pts = sorted((x, y) for x, y in series[name]
                     if math.isfinite(x) and math.isfinite(y) and x > 0 and y > 0)
        if pts:
            clean[name] = pts
    if not clean:
        raise ValueError("nothing to plot")
    xs = [math.log10(x) for pts in clean.values() for x, _ in pts]
    ys = [math.log10(y) for pts in clean.values() for _, y in pts]
    x0, x1 = math.floor(min(xs)), math.ceil(max(xs))
    y0, y1 = math.floor(min(ys)), math.ceil(max(ys))
    x1 = max(x1, x0 + 1)
    y1 = max(y1, y0 + 1)
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(lx):
        return MARGIN["left"] + (lx - x0) / (x1 - x0) * pw

    def py(ly):
        return MARGIN["top"] + (1 - (ly - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.0f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" '
        'fill="none" stroke="black"/>',
    ]
    for e in _decades(x0, x1):
        x = px(e)
        out.append(f'<line x1="{_fmt(x)}" y1="{MARGIN["top"]}" x2="{_fmt(x)}" y2="{MARGIN["top"] + ph}" '
                   'stroke="#ddd"/>')
        out.append(f'<text x="{_fmt(x)}" y="{MARGIN["top"] + ph + 18}" text-anchor="middle">1e{e}</text>')
    for e in _decades(y0, y1):
        y = py(e)
        out.append(f'<line x1="{MARGIN["left"]}" y1="{_fmt(y)}" x2="{MARGIN["left"] + pw}" y2="{_fmt(y)}" '
                   'stroke="#ddd"/>')
        out.append(f'<text x="{MARGIN["left"] - 8}" y="{_fmt(y + 4)}" text-anchor="end">1e{e}</text>')
    out.append(f'<text x="{MARGIN["left"] + pw / 2:.0f}" y="{HEIGHT - 15}" text-anchor="middle">'
               f'{escape(xlabel)}</text>')
    out.append(f'<text x="20" y="{MARGIN["top"] + ph / 2:.0f}" text-anchor="middle" '
               f'transform="rotate(-90 20 {MARGIN["top"] + ph / 2:.0f})">{escape(ylabel)}</text>')
    for i, (name, pts) in enumerate(clean.items()):
        colour = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{_fmt(px(math.log10(x)))},{_fmt(py(math.log10(y)))}" for x, y in pts)
        out.append(f'<polyline class="series" data-name="{escape(name)}" points="{coords}" '
                   f'fill="none" stroke="{colour}" stroke-width="2"/>')
        ly = MARGIN["top"] + 16 + 18 * i
        lx = MARGIN["left"] + pw + 12
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly + 4}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
