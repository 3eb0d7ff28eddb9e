"""Plain SVG output: field-magnitude heatmaps and coefficient stem plots.

Output depends only on the input arrays, so files are reproducible byte
for byte. Colours interpolate linearly between five fixed stops
(dark purple -> blue -> teal -> green -> yellow) over [min, max].
"""
from __future__ import annotations

import numpy as np

RAMP = ((0.0, (68, 1, 84)), (0.25, (59, 82, 139)), (0.5, (33, 145, 140)),
        (0.75, (94, 201, 98)), (1.0, (253, 231, 37)))


def ramp_color(t: float) -> str:
    t = min(max(float(t), 0.0), 1.0)
    for (t0, c0), (t1, c1) in zip(RAMP[:-1], RAMP[1:]):
        if t <= t1:
            w = (t - t0) / (t1 - t0)
            rgb = [round(a + w * (b - a)) for a, b in zip(c0, c1)]
            return "#%02x%02x%02x" % tuple(rgb)
    return "#%02x%02x%02x" % RAMP[-1][1]


def heatmap_svg(values: np.ndarray, title: str = "", cell: int = 4,
                markers=None, extent=None) -> str:
    """Heatmap of a real (nx, ny) array; row i is x, column j is y (y drawn upward).

    ``markers`` are (x, y) points in the coordinates of ``extent``
    (x_min, x_max, y_min, y_max), drawn as crosses.
    """
    v = np.asarray(values, dtype=float)
    nx, ny = v.shape
    lo, hi = float(v.min()), float(v.max())
    span = hi - lo if hi > lo else 1.0
    top = 24
    w, h = nx * cell, ny * cell
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h + top + 20}" '
           f'viewBox="0 0 {w} {h + top + 20}">',
           f'<text x="2" y="16" font-family="monospace" font-size="12">{title}</text>']
    for i in range(nx):
        for j in range(ny):
            c = ramp_color((v[i, j] - lo) / span)
            out.append(f'<rect x="{i * cell}" y="{top + (ny - 1 - j) * cell}" width="{cell}" '
                       f'height="{cell}" fill="{c}"/>')
    if markers is not None and extent is not None:
        x0, x1, y0, y1 = extent
        for x, y in np.asarray(markers, dtype=float):
            px = (x - x0) / (x1 - x0) * w
            py = top + (1.0 - (y - y0) / (y1 - y0)) * h
            out.append(f'<path d="M{px - 4:.2f},{py - 4:.2f}L{px + 4:.2f},{py + 4:.2f}'
                       f'M{px - 4:.2f},{py + 4:.2f}L{px + 4:.2f},{py - 4:.2f}" '
                       f'stroke="red" stroke-width="1.5"/>')
    out.append(f'<text x="2" y="{h + top + 15}" font-family="monospace" font-size="11">'
               f'min {lo:.4g}  max {hi:.4g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def stem_svg(angles_rad, magnitudes, title: str = "", width: int = 480,
             height: int = 240) -> str:
    """Stem plot of coefficient magnitude versus direction angle on [-pi, pi)."""
    a = np.asarray(angles_rad, dtype=float)
    m = np.asarray(magnitudes, dtype=float)
    mmax = float(m.max()) if m.size and m.max() > 0 else 1.0
    pad, top = 30, 24
    plot_h = height - top - pad
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<text x="2" y="16" font-family="monospace" font-size="12">{title}</text>',
           f'<line x1="{pad}" y1="{top + plot_h}" x2="{width - 10}" y2="{top + plot_h}" '
           f'stroke="black"/>']
    for ang, mag in zip(a, m):
        x = pad + (ang + np.pi) / (2 * np.pi) * (width - 10 - pad)
        y = top + plot_h * (1.0 - mag / mmax)
        out.append(f'<line x1="{x:.2f}" y1="{top + plot_h}" x2="{x:.2f}" y2="{y:.2f}" '
                   f'stroke="#3b528b"/>')
        out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="2.5" fill="#3b528b"/>')
    out.append(f'<text x="{pad}" y="{height - 8}" font-family="monospace" font-size="11">'
               f'direction -pi..pi   max |alpha| {mmax:.4g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
