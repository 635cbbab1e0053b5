"""Minimal SVG scatter chart of log Z estimates against N."""

from __future__ import annotations

import math
from collections import defaultdict
from xml.sax.saxutils import escape

COLORS = {"hais": "#1f4fd1", "ais-hmc-reset": "#1a9c3a", "ais-mh": "#d0261d"}
MARKERS = {"hais": "cross", "ais-hmc-reset": "star", "ais-mh": "dot"}

W, H = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 150, 30, 50


def _marker(kind: str, x: float, y: float, color: str) -> str:
    if kind == "cross":
        return (
            f'<path d="M{x - 4:.2f},{y - 4:.2f}L{x + 4:.2f},{y + 4:.2f}'
            f'M{x - 4:.2f},{y + 4:.2f}L{x + 4:.2f},{y - 4:.2f}" stroke="{color}" stroke-width="1.5"/>'
        )
    if kind == "star":
        pts = []
        for i in range(10):
            r = 5.0 if i % 2 == 0 else 2.2
            a = math.pi / 2 + i * math.pi / 5
            pts.append(f"{x + r * math.cos(a):.2f},{y - r * math.sin(a):.2f}")
        return f'<polygon points="{" ".join(pts)}" fill="{color}"/>'
    return f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="{color}"/>'


def sweep_chart(rows, truth: float | None = None, title: str = "log Z estimates") -> str:
    """Render sweep rows as an SVG document.

    Each run is a marker at (N, log Z) on a log-scaled N axis; a solid line
    joins each estimator's per-N means.  ``truth``, when given, is drawn as a
    dashed horizontal line.
    """
    rows = [r for r in rows if math.isfinite(r.log_z)]
    ns = sorted({r.n_distributions for r in rows}) or [1]
    ys = [r.log_z for r in rows] + ([truth] if truth is not None else [])
    lo_y, hi_y = (min(ys), max(ys)) if ys else (0.0, 1.0)
    if hi_y - lo_y < 1e-9:
        lo_y, hi_y = lo_y - 0.5, hi_y + 0.5
    pad = 0.05 * (hi_y - lo_y)
    lo_y, hi_y = lo_y - pad, hi_y + pad
    lo_x, hi_x = math.log10(ns[0]), math.log10(ns[-1])
    if hi_x - lo_x < 1e-9:
        lo_x, hi_x = lo_x - 0.5, hi_x + 0.5
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM

    def sx(n):
        return LEFT + (math.log10(n) - lo_x) / (hi_x - lo_x) * pw

    def sy(v):
        return TOP + (hi_y - v) / (hi_y - lo_y) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{LEFT}" y="18" font-family="sans-serif" font-size="14">{escape(title)}</text>',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for n in ns:
        x = sx(n)
        out.append(f'<line x1="{x:.2f}" y1="{TOP + ph}" x2="{x:.2f}" y2="{TOP + ph + 5}" stroke="black"/>')
        out.append(
            f'<text x="{x:.2f}" y="{TOP + ph + 18}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{n}</text>'
        )
    for i in range(5):
        v = lo_y + i * (hi_y - lo_y) / 4
        y = sy(v)
        out.append(f'<line x1="{LEFT - 5}" y1="{y:.2f}" x2="{LEFT}" y2="{y:.2f}" stroke="black"/>')
        out.append(
            f'<text x="{LEFT - 8}" y="{y + 4:.2f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{v:.3g}</text>'
        )
    out.append(
        f'<text x="{LEFT + pw / 2}" y="{H - 10}" text-anchor="middle" '
        'font-family="sans-serif" font-size="12">intermediate distributions N</text>'
    )
    out.append(
        f'<text x="16" y="{TOP + ph / 2}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="12" transform="rotate(-90 16 {TOP + ph / 2})">log Z</text>'
    )
    if truth is not None:
        y = sy(truth)
        out.append(
            f'<line class="truth" x1="{LEFT}" y1="{y:.2f}" x2="{LEFT + pw}" y2="{y:.2f}" '
            f'stroke="{COLORS["hais"]}" stroke-dasharray="6,4"/>'
        )

    by_est = defaultdict(lambda: defaultdict(list))
    for r in rows:
        by_est[r.estimator][r.n_distributions].append(r.log_z)
    legend_y = TOP + 10
    for est, per_n in by_est.items():
        color = COLORS.get(est, "#555555")
        kind = MARKERS.get(est, "dot")
        means = [(n, sum(v) / len(v)) for n, v in sorted(per_n.items())]
        pts = " ".join(f"{sx(n):.2f},{sy(m):.2f}" for n, m in means)
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1"/>')
        for n, vals in sorted(per_n.items()):
            for v in vals:
                out.append(_marker(kind, sx(n), sy(v), color))
        out.append(_marker(kind, LEFT + pw + 15, legend_y, color))
        out.append(
            f'<text x="{LEFT + pw + 25}" y="{legend_y + 4}" font-family="sans-serif" '
            f'font-size="11">{escape(est)}</text>'
        )
        legend_y += 18
    if truth is not None:
        out.append(
            f'<line x1="{LEFT + pw + 8}" y1="{legend_y}" x2="{LEFT + pw + 22}" y2="{legend_y}" '
            f'stroke="{COLORS["hais"]}" stroke-dasharray="6,4"/>'
        )
        out.append(
            f'<text x="{LEFT + pw + 25}" y="{legend_y + 4}" font-family="sans-serif" font-size="11">truth</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
