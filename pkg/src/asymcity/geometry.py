"""Planar geometry helpers: polygons, ray casting and a uniform-grid edge index."""

from __future__ import annotations

import math

import numpy as np

# Closed-segment tolerance on the segment parameter; makes rays through a
# polygon vertex register on at least one of the two incident edges.
SEGMENT_EPS = 1e-12


def signed_area(poly) -> float:
    pts = np.asarray(poly, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def centroid(poly) -> tuple[float, float]:
    """Area centroid of a simple polygon."""
    pts = np.asarray(poly, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * cross.sum()
    cx = ((x + xn) * cross).sum() / (6.0 * a)
    cy = ((y + yn) * cross).sum() / (6.0 * a)
    return float(cx), float(cy)


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _on_segment(a, b, p) -> bool:
    return (min(a[0], b[0]) <= p[0] <= max(a[0], b[0])
            and min(a[1], b[1]) <= p[1] <= max(a[1], b[1]))


def segments_intersect(a, b, c, d) -> bool:
    """True if closed segments ab and cd share at least one point."""
    o1, o2 = _orient(a, b, c), _orient(a, b, d)
    o3, o4 = _orient(c, d, a), _orient(c, d, b)
    if ((o1 > 0) != (o2 > 0) and o1 != 0 and o2 != 0
            and (o3 > 0) != (o4 > 0) and o3 != 0 and o4 != 0):
        return True
    if o1 == 0 and _on_segment(a, b, c):
        return True
    if o2 == 0 and _on_segment(a, b, d):
        return True
    if o3 == 0 and _on_segment(c, d, a):
        return True
    if o4 == 0 and _on_segment(c, d, b):
        return True
    return False


def is_simple_polygon(poly) -> bool:
    """Check that no two non-adjacent edges touch and no edge is degenerate."""
    n = len(poly)
    if n < 3:
        return False
    edges = [(tuple(poly[i]), tuple(poly[(i + 1) % n])) for i in range(n)]
    for a, b in edges:
        if a == b:
            return False
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if segments_intersect(*edges[i], *edges[j]):
                return False
    return True


def point_on_boundary(p, poly) -> bool:
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        if _orient(a, b, p) == 0 and _on_segment(a, b, p):
            return True
    return False


def point_in_polygon(p, poly) -> bool:
    """Strict interior test; points on the boundary are outside."""
    if point_on_boundary(p, poly):
        return False
    x, y = p
    inside = False
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            xi = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if xi > x:
                inside = not inside
    return inside


def ray_directions(n_rays: int) -> tuple[np.ndarray, np.ndarray]:
    az = 2.0 * np.pi * np.arange(n_rays) / n_rays
    return np.cos(az), np.sin(az)


class SegmentSet:
    """Flat arrays of building edges with the owning building's height."""

    def __init__(self, ax, ay, bx, by, height):
        self.ax = np.asarray(ax, dtype=float)
        self.ay = np.asarray(ay, dtype=float)
        self.bx = np.asarray(bx, dtype=float)
        self.by = np.asarray(by, dtype=float)
        self.height = np.asarray(height, dtype=float)

    @classmethod
    def from_buildings(cls, buildings) -> "SegmentSet":
        ax, ay, bx, by, h = [], [], [], [], []
        for b in buildings:
            fp = b.footprint
            n = len(fp)
            for i in range(n):
                ax.append(fp[i][0])
                ay.append(fp[i][1])
                bx.append(fp[(i + 1) % n][0])
                by.append(fp[(i + 1) % n][1])
                h.append(b.height)
        return cls(ax, ay, bx, by, h)

    def __len__(self):
        return len(self.ax)

    def subset(self, idx) -> "SegmentSet":
        return SegmentSet(self.ax[idx], self.ay[idx], self.bx[idx], self.by[idx], self.height[idx])


def nearest_hits(px, py, cos, sin, segs: SegmentSet, max_distance):
    """Nearest hit distance and occluder height for every ray.

    Rays with no hit within ``max_distance`` get distance ``inf`` and height
    ``nan``. Equidistant hits resolve to the taller occluder. Edges parallel to
    a ray are skipped; in a closed polygon the shared vertex of the
    neighbouring edge registers the hit at the same distance.
    """
    n_rays = len(cos)
    if len(segs) == 0:
        return np.full(n_rays, np.inf), np.full(n_rays, np.nan)
    ex = segs.bx - segs.ax
    ey = segs.by - segs.ay
    wx = segs.ax - px
    wy = segs.ay - py
    c = cos[:, None]
    s = sin[:, None]
    denom = c * ey - s * ex
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (wx * ey - wy * ex) / denom
        u = (wx * s - wy * c) / denom
    ok = ((denom != 0) & (t >= 0) & (t <= max_distance)
          & (u >= -SEGMENT_EPS) & (u <= 1 + SEGMENT_EPS))
    t = np.where(ok, t, np.inf)
    tmin = t.min(axis=1)
    tied = ok & (t == tmin[:, None])
    h = np.where(tied, segs.height[None, :], -np.inf).max(axis=1)
    h = np.where(np.isfinite(tmin), h, np.nan)
    return tmin, h


class GridIndex:
    """Uniform-grid bucket index over segments.

    Each segment is registered in every cell its bounding box overlaps, so a
    query square returns a superset of the segments that can intersect it.
    """

    def __init__(self, segs: SegmentSet, cell_size: float = 50.0):
        self.segs = segs
        self.cell = float(cell_size)
        self.buckets: dict[tuple[int, int], list[int]] = {}
        for i in range(len(segs)):
            x0 = min(segs.ax[i], segs.bx[i])
            x1 = max(segs.ax[i], segs.bx[i])
            y0 = min(segs.ay[i], segs.by[i])
            y1 = max(segs.ay[i], segs.by[i])
            for cx in range(self._cell(x0), self._cell(x1) + 1):
                for cy in range(self._cell(y0), self._cell(y1) + 1):
                    self.buckets.setdefault((cx, cy), []).append(i)

    def _cell(self, v: float) -> int:
        return math.floor(v / self.cell)

    def query(self, x0, y0, x1, y1) -> np.ndarray:
        """Sorted indices of segments whose cells overlap the box."""
        found = set()
        for cx in range(self._cell(x0) - 1, self._cell(x1) + 2):
            for cy in range(self._cell(y0) - 1, self._cell(y1) + 2):
                found.update(self.buckets.get((cx, cy), ()))
        return np.array(sorted(found), dtype=int)
