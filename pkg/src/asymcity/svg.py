"""Minimal SVG writers for heatmaps and scatter plots."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

# viridis-like ramp
_STOPS = [(0.0, (68, 1, 84)), (0.25, (59, 82, 139)), (0.5, (33, 145, 140)),
          (0.75, (94, 201, 98)), (1.0, (253, 231, 37))]


def ramp(t: float) -> str:
    t = min(max(float(t), 0.0), 1.0)
    for (t0, c0), (t1, c1) in zip(_STOPS, _STOPS[1:]):
        if t <= t1:
            f = (t - t0) / (t1 - t0)
            rgb = [round(a + f * (b - a)) for a, b in zip(c0, c1)]
            return "#%02x%02x%02x" % tuple(rgb)
    return "#%02x%02x%02x" % _STOPS[-1][1]


def origin_color(k: int) -> str:
    hue = (k * 137.508) % 360.0
    return f"hsl({hue:.1f},70%,45%)"


def _doc(width, height, body, title):
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">\n<title>{escape(title)}</title>\n')
    return head + "\n".join(body) + "\n</svg>\n"


def _normalize(values, vmin=None, vmax=None):
    finite = values[np.isfinite(values)]
    if vmin is None:
        vmin = float(finite.min()) if finite.size else 0.0
    if vmax is None:
        vmax = float(finite.max()) if finite.size else 1.0
    lo, hi = vmin, vmax
    span = hi - lo if hi > lo else 1.0
    return lambda v: (v - lo) / span


def matrix_heatmap(M, title="Origin embedding distance matrix", cell=24) -> str:
    M = np.asarray(M, dtype=float)
    n_rows, n_cols = M.shape
    norm = _normalize(M)
    body = []
    for i in range(n_rows):
        for j in range(n_cols):
            body.append(f'<rect class="cell" x="{j * cell}" y="{i * cell}" width="{cell}" '
                        f'height="{cell}" fill="{ramp(norm(M[i, j]))}"><title>{M[i, j]:.6g}</title></rect>')
    return _doc(n_cols * cell, n_rows * cell, body, title)


def grid_heatmap(values, title="Visual exposure", cell=6, vmin=0.0, vmax=1.0) -> str:
    """Heatmap of a (ny, nx) grid; NaN cells are drawn grey. Row 0 is the bottom row."""
    values = np.asarray(values, dtype=float)
    ny, nx = values.shape
    norm = _normalize(values, vmin, vmax)
    body = []
    for j in range(ny):
        y = (ny - 1 - j) * cell
        for i in range(nx):
            v = values[j, i]
            fill = "#9e9e9e" if np.isnan(v) else ramp(norm(v))
            body.append(f'<rect class="cell" x="{i * cell}" y="{y}" width="{cell}" height="{cell}" fill="{fill}"/>')
    return _doc(nx * cell, ny * cell, body, title)


def scatter(points, labels, title="Representation space", size=400, pad=20) -> str:
    P = np.asarray(points, dtype=float)
    lo, hi = P.min(axis=0), P.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    inner = size - 2 * pad
    body = []
    for (x, y), k in zip(P, labels):
        sx = pad + (x - lo[0]) / span[0] * inner
        sy = size - pad - (y - lo[1]) / span[1] * inner
        body.append(f'<circle class="point" cx="{sx:.2f}" cy="{sy:.2f}" r="3" '
                    f'fill="{origin_color(int(k))}" data-origin="{int(k)}"/>')
    return _doc(size, size, body, title)
