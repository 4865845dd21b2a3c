"""Tiny dependency-free SVG emission: meridian profiles and diagnostic curves."""

from __future__ import annotations

import math

import numpy as np

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
           "#17becf", "#e377c2"]


def _polyline(points, color, width=1.2):
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in points)
    return f'<polyline fill="none" stroke="{color}" stroke-width="{width}" points="{pts}"/>'


def _panel(curves, labels, box, title):
    """Scale a list of (x, y) series into the pixel box and draw axes."""
    x0, y0, w, h = box
    xs = [x for c in curves for x, _ in c]
    ys = [y for c in curves for _, y in c]
    if not xs:
        return []
    xmin, xmax = min(xs), max(xs)
    ymin, ymax = min(ys), max(ys)
    if xmax - xmin < 1e-300:
        xmax = xmin + 1.0
    if ymax - ymin < 1e-300:
        ymax = ymin + 1.0

    def to_px(p):
        x, y = p
        return (x0 + (x - xmin) / (xmax - xmin) * w,
                y0 + h - (y - ymin) / (ymax - ymin) * h)

    parts = [f'<rect x="{x0}" y="{y0}" width="{w}" height="{h}" fill="none" stroke="#999"/>',
             f'<text x="{x0 + 4}" y="{y0 - 6}" font-size="12" fill="#333">{title}</text>']
    for k, curve in enumerate(curves):
        parts.append(_polyline([to_px(p) for p in curve], PALETTE[k % len(PALETTE)]))
    for k, lab in enumerate(labels):
        parts.append(f'<text x="{x0 + 6}" y="{y0 + 14 + 12 * k}" font-size="10" '
                     f'fill="{PALETTE[k % len(PALETTE)]}">{lab}</text>')
    parts.append(f'<text x="{x0}" y="{y0 + h + 14}" font-size="10" fill="#555">'
                 f'{xmin:.3g} .. {xmax:.3g}</text>')
    parts.append(f'<text x="{x0 + w - 80}" y="{y0 + h + 14}" font-size="10" fill="#555">'
                 f'y: {ymin:.3g} .. {ymax:.3g}</text>')
    return parts


def meridian_points(state):
    """Chart-image cross-section in the phi = 0 / phi = pi plane."""
    from .sphgrid import covariant_hessian

    g = state.grid
    grad, _, _ = covariant_hessian(g, state.s)
    pts = []
    for i, sgn in ((0, 1.0), (g.I // 2, -1.0)):
        s = state.s[i]
        g1 = grad[i, :, 0]
        x = sgn * (s * np.sin(g.theta) + g1 * np.cos(g.theta))
        y = s * np.cos(g.theta) - g1 * np.sin(g.theta)
        seq = list(zip(x, y))
        pts.append(seq if sgn > 0 else seq[::-1])
    closed = pts[1] + pts[0]
    closed.append(closed[0])
    return closed


def run_svg(flow_run, decay=None) -> str:
    """Two-panel figure: meridian profiles over time, diagnostics curves."""
    snaps = flow_run.snapshots
    take = max(1, len(snaps) // 6)
    profiles = [meridian_points(st) for _, st in snaps[::take]]
    records = flow_run.records
    t = [r.t for r in records]
    curves = [list(zip(t, [r.q for r in records])),
              list(zip(t, [r.pinch for r in records])),
              list(zip(t, [r.osc for r in records]))]
    labels = ["q = min kappa1/F", "pinch", "osc"]
    if not math.isnan(records[0].dev):
        curves.append(list(zip(t, [r.dev for r in records])))
        labels.append("max|kappa - 1|")

    parts = ['<svg xmlns="http://www.w3.org/2000/svg" width="880" height="440" '
             'viewBox="0 0 880 440">',
             '<rect width="880" height="440" fill="white"/>']
    parts += _panel(profiles, [f"t={snaps[k][0]:.3g}" for k in range(0, len(snaps), take)],
                    (40, 30, 380, 360), "meridian profile (chart image)")
    parts += _panel(curves, labels, (480, 30, 360, 360), "diagnostics")
    parts.append("</svg>")
    return "\n".join(parts)
