"""Minimal SVG line plots with interquartile bands."""
from __future__ import annotations

from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def line_band_svg(x, series: dict, title: str = "", xlabel: str = "", ylabel: str = "",
                  width: int = 640, height: int = 420) -> str:
    """``series`` maps a label to ``(center, low, high)`` sequences aligned with ``x``."""
    left, right, top, bottom = 70, 150, 40, 50
    pw, ph = width - left - right, height - top - bottom
    ys = [v for c, lo, hi in series.values() for v in (*c, *lo, *hi)]
    ymin, ymax = (min(ys), max(ys)) if ys else (0.0, 1.0)
    if ymax - ymin < 1e-12:
        ymin, ymax = ymin - 0.5, ymax + 0.5
    pad = 0.05 * (ymax - ymin)
    ymin, ymax = ymin - pad, ymax + pad
    xmin, xmax = min(x), max(x)
    if xmax == xmin:
        xmin, xmax = xmin - 1, xmax + 1

    def px(v):
        return left + (v - xmin) / (xmax - xmin) * pw

    def py(v):
        return top + (ymax - v) / (ymax - ymin) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="12">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="14">'
           f'{escape(title)}</text>',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>']
    for i in range(5):
        yv = ymin + i * (ymax - ymin) / 4
        out.append(f'<text x="{left - 6}" y="{py(yv) + 4:.1f}" text-anchor="end">{yv:.3g}</text>')
    for xv in x:
        out.append(f'<text x="{px(xv):.1f}" y="{top + ph + 16}" text-anchor="middle">{xv:g}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">'
               f'{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {top + ph / 2:.1f})">{escape(ylabel)}</text>')
    for k, (label, (center, low, high)) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        band = [f"{px(a):.1f},{py(b):.1f}" for a, b in zip(x, high)]
        band += [f"{px(a):.1f},{py(b):.1f}" for a, b in zip(reversed(x), reversed(low))]
        out.append(f'<polygon points="{" ".join(band)}" fill="{color}" fill-opacity="0.18" '
                   f'stroke="none"/>')
        line = " ".join(f"{px(a):.1f},{py(b):.1f}" for a, b in zip(x, center))
        out.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="2"/>')
        ly = top + 16 + 18 * k
        out.append(f'<line x1="{left + pw + 12}" y1="{ly - 4}" x2="{left + pw + 32}" '
                   f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 38}" y="{ly}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path, *args, **kwargs) -> None:
    with open(path, "w") as fh:
        fh.write(line_band_svg(*args, **kwargs))
