"""Minimal SVG line charts for navigation-time sweeps."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 520, 320
MARGIN = dict(left=70, right=20, top=30, bottom=45)
COLORS = {"slosh_free": "#1f5fbf", "baseline": "#c0392b"}


def _ticks(lo, hi, count=5):
    return np.linspace(lo, hi, count)


def metric_chart(title: str, series: dict, infeasible_T=(), log_y: bool = False) -> str:
    """``series`` maps a label to (T values, metric values); NaN points are skipped.

    ``infeasible_T`` lists navigation times where the slosh-free run needed
    slack above tolerance; the band around each one is shaded.
    """
    xs = np.concatenate([np.asarray(v[0], dtype=float) for v in series.values()] or [np.zeros(0)])
    ys = np.concatenate([np.asarray(v[1], dtype=float) for v in series.values()] or [np.zeros(0)])
    ok = np.isfinite(ys) & (ys > 0 if log_y else True)
    tr = (lambda v: np.log10(v)) if log_y else (lambda v: v)
    x_lo, x_hi = (xs.min(), xs.max()) if xs.size else (0.0, 1.0)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    if ok.any():
        y_lo, y_hi = float(tr(ys[ok]).min()), float(tr(ys[ok]).max())
    else:
        y_lo, y_hi = 0.0, 1.0
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(x):
        return MARGIN["left"] + pw * (x - x_lo) / (x_hi - x_lo)

    def py(y):
        return MARGIN["top"] + ph * (1.0 - (y - y_lo) / (y_hi - y_lo))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
    ]
    # shade half the grid spacing either side of each infeasible T
    grid = np.unique(xs)
    half = 0.5 * (np.diff(grid).min() if grid.size > 1 else 1.0)
    for T in sorted(set(infeasible_T)):
        a, b = px(max(T - half, x_lo)), px(min(T + half, x_hi))
        out.append(f'<rect x="{a:.1f}" y="{MARGIN["top"]}" width="{b - a:.1f}" height="{ph}" fill="#999" fill-opacity="0.25"/>')
    out.append(f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    for x in _ticks(x_lo, x_hi):
        out.append(f'<text x="{px(x):.1f}" y="{HEIGHT - MARGIN["bottom"] + 15}" text-anchor="middle">{x:.3g}</text>')
    for y in _ticks(y_lo, y_hi):
        label = f"1e{y:.1f}" if log_y else f"{y:.3g}"
        out.append(f'<text x="{MARGIN["left"] - 6}" y="{py(y) + 4:.1f}" text-anchor="end">{label}</text>')
    out.append(f'<text x="{MARGIN["left"] + pw / 2:.1f}" y="{HEIGHT - 8}" text-anchor="middle">navigation time T [s]</text>')
    for k, (label, (T, v)) in enumerate(series.items()):
        T, v = np.asarray(T, dtype=float), np.asarray(v, dtype=float)
        keep = np.isfinite(v) & (v > 0 if log_y else True)
        order = np.argsort(T[keep])
        pts = " ".join(f"{px(x):.1f},{py(tr(y)):.1f}" for x, y in zip(T[keep][order], v[keep][order]))
        color = COLORS.get(label, "#333")
        if pts:
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
            for p in pts.split():
                cx, cy = p.split(",")
                out.append(f'<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>')
        ly = MARGIN["top"] + 14 + 14 * k
        out.append(f'<text x="{WIDTH - MARGIN["right"] - 6}" y="{ly}" text-anchor="end" fill="{color}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
