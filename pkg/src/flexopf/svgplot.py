"""Minimal deterministic SVG writer for CLI artifacts.

Static vector files only: a stacked bar chart for price components and a
log-scale scatter for eigenvalue spectra. No display server, no plotting
dependency, byte-stable output for a given input.
"""

from __future__ import annotations

import math

_COLORS = ("#4878a8", "#e49444", "#5ba053", "#c44e52", "#8172b3", "#937860")


def _fmt(x: float) -> str:
    return f"{x:.3f}".rstrip("0").rstrip(".")


def _header(width: int, height: int, title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="18" text-anchor="middle" font-family="sans-serif" '
        f'font-size="13" font-weight="bold">{title}</text>',
    ]


def stacked_bars(labels: list[str], series: dict[str, list[float]], title: str,
                 width: int = 640, height: int = 400) -> str:
    """Stacked bar chart; negative components stack below the axis."""
    names = list(series)
    nbar = len(labels)
    pos_tot = [sum(max(series[n][i], 0.0) for n in names) for i in range(nbar)]
    neg_tot = [sum(min(series[n][i], 0.0) for n in names) for i in range(nbar)]
    top = max(pos_tot + [0.0]) or 1.0
    bot = min(neg_tot + [0.0])
    span = (top - bot) or 1.0

    left, right, head, foot = 60, 20, 30, 60
    plot_w = width - left - right
    plot_h = height - head - foot
    y_of = lambda v: head + (top - v) / span * plot_h

    out = _header(width, height, title)
    out.append(f'<line x1="{left}" y1="{_fmt(y_of(0.0))}" x2="{width - right}" '
               f'y2="{_fmt(y_of(0.0))}" stroke="#333" stroke-width="1"/>')
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        v = bot + frac * span
        y = y_of(v)
        out.append(f'<line x1="{left - 4}" y1="{_fmt(y)}" x2="{left}" y2="{_fmt(y)}" stroke="#333"/>')
        out.append(f'<text x="{left - 8}" y="{_fmt(y + 4)}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="10">{v:.3g}</text>')

    bw = plot_w / max(nbar, 1) * 0.7
    gap = plot_w / max(nbar, 1)
    for i, lab in enumerate(labels):
        x = left + i * gap + gap * 0.15
        up = 0.0
        dn = 0.0
        for c, name in enumerate(names):
            v = series[name][i]
            if v == 0.0:
                continue
            if v > 0:
                y1, y2 = y_of(up + v), y_of(up)
                up += v
            else:
                y1, y2 = y_of(dn), y_of(dn + v)
                dn += v
            out.append(f'<rect x="{_fmt(x)}" y="{_fmt(y1)}" width="{_fmt(bw)}" '
                       f'height="{_fmt(max(y2 - y1, 0.0))}" fill="{_COLORS[c % len(_COLORS)]}"/>')
        out.append(f'<text x="{_fmt(x + bw / 2)}" y="{height - foot + 14}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="9" '
                   f'transform="rotate(30 {_fmt(x + bw / 2)} {height - foot + 14})">{lab}</text>')

    lx = left
    for c, name in enumerate(names):
        out.append(f'<rect x="{lx}" y="{height - 18}" width="10" height="10" '
                   f'fill="{_COLORS[c % len(_COLORS)]}"/>')
        out.append(f'<text x="{lx + 14}" y="{height - 9}" font-family="sans-serif" '
                   f'font-size="10">{name}</text>')
        lx += 14 + 7 * len(name) + 18
    out.append("</svg>")
    return "\n".join(out) + "\n"


def log_spectrum(groups: list[str], spectra: list[list[float]], title: str,
                 width: int = 640, height: int = 400, floor: float = 1e-14) -> str:
    """Eigenvalue magnitudes per group on a log10 axis."""
    vals = [max(abs(v), floor) for sp in spectra for v in sp]
    lo = math.floor(math.log10(min(vals)))
    hi = math.ceil(math.log10(max(vals)))
    if hi == lo:
        hi = lo + 1
    left, right, head, foot = 70, 20, 30, 50
    plot_w = width - left - right
    plot_h = height - head - foot
    y_of = lambda v: head + (hi - math.log10(max(abs(v), floor))) / (hi - lo) * plot_h

    out = _header(width, height, title)
    for e in range(lo, hi + 1):
        y = y_of(10.0 ** e)
        out.append(f'<line x1="{left}" y1="{_fmt(y)}" x2="{width - right}" y2="{_fmt(y)}" '
                   f'stroke="#ddd" stroke-width="0.5"/>')
        out.append(f'<text x="{left - 6}" y="{_fmt(y + 3)}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="10">1e{e}</text>')
    gap = plot_w / max(len(groups), 1)
    for gi, (glab, sp) in enumerate(zip(groups, spectra)):
        x = left + gi * gap + gap / 2
        for v in sp:
            out.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y_of(v))}" r="3" '
                       f'fill="{_COLORS[gi % len(_COLORS)]}" fill-opacity="0.8"/>')
        out.append(f'<text x="{_fmt(x)}" y="{height - foot + 16}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="10">{glab}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
