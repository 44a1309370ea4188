"""Minimal SVG line charts: two stacked panels (states, controls) sharing a time axis."""

from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _panel(series, t, top, height, width, margin, title):
    lo = min((min(s) for s in series), default=0.0)
    hi = max((max(s) for s in series), default=1.0)
    if hi - lo < 1e-12:
        lo, hi = lo - 1.0, hi + 1.0
    t0, t1 = t[0], t[-1] if t[-1] > t[0] else t[0] + 1.0
    x_of = lambda v: margin + (v - t0) / (t1 - t0) * (width - 2 * margin)
    y_of = lambda v: top + height - (v - lo) / (hi - lo) * height
    out = [
        f'<rect x="{margin}" y="{top}" width="{width - 2 * margin}" height="{height}" '
        'fill="none" stroke="#999"/>',
        f'<text x="{margin}" y="{top - 6}" font-size="12">{escape(title)}</text>',
        f'<text x="4" y="{top + 10}" font-size="10">{hi:.3g}</text>',
        f'<text x="4" y="{top + height}" font-size="10">{lo:.3g}</text>',
    ]
    if lo < 0 < hi:
        y0 = y_of(0.0)
        out.append(f'<line x1="{margin}" y1="{y0:.2f}" x2="{width - margin}" y2="{y0:.2f}" '
                   'stroke="#ccc" stroke-dasharray="4 3"/>')
    for i, s in enumerate(series):
        pts = " ".join(f"{x_of(a):.2f},{y_of(b):.2f}" for a, b in zip(t, s))
        out.append(f'<polyline fill="none" stroke="{PALETTE[i % len(PALETTE)]}" '
                   f'stroke-width="1.5" points="{pts}"/>')
    return out


def trace_svg(t, states, controls, width=720, panel_height=200, margin=50):
    """Render ``states`` (list of series) above ``controls`` (list of series) vs ``t``."""
    t = [float(v) for v in t]
    if not t:
        raise ValueError("nothing to plot")
    top2 = 30 + panel_height + 50
    total_h = top2 + panel_height + 40
    body = ['<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{total_h}" '
            f'viewBox="0 0 {width} {total_h}">',
            '<rect width="100%" height="100%" fill="white"/>']
    body += _panel(states, t, 30, panel_height, width, margin, "state x(t)")
    body += _panel(controls, t, top2, panel_height, width, margin, "control u(t)")
    body.append(f'<text x="{width / 2:.0f}" y="{total_h - 10}" font-size="12" '
                f'text-anchor="middle">t  [{t[0]:.3g}, {t[-1]:.3g}]</text>')
    body.append("</svg>")
    return "\n".join(body) + "\n"
