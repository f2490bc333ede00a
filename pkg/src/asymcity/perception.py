"""Geometric trajectory features: vertical-openness visibility and turning curvature.

Visibility at a point is the mean, over an azimuthal fan of rays, of how
much sky each ray keeps above the first facade it meets::

    openness = 1 - atan2(max(h - eye_height, 0), d) / (pi / 2)

Rays that meet nothing within ``max_distance`` have openness 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ParameterError
from .geometry import GridIndex, SegmentSet, nearest_hits, point_in_polygon, ray_directions
from .morphology import City


@dataclass(frozen=True)
class PerceptionConfig:
    n_rays: int = 36
    max_distance: float = 150.0
    eye_height: float = 1.6

    def validate(self):
        if self.n_rays < 4:
            raise ParameterError("n_rays", "must be >= 4")
        if not self.max_distance > 0:
            raise ParameterError("max_distance", "must be > 0")
        if self.eye_height < 0:
            raise ParameterError("eye_height", "must be >= 0")


class VisibilityField:
    """Pre-built occluder index for repeated visibility queries on one city."""

    def __init__(self, city: City, cfg: PerceptionConfig = PerceptionConfig()):
        cfg.validate()
        self.city = city
        self.cfg = cfg
        self.segments = SegmentSet.from_buildings(city.buildings)
        self.index = GridIndex(self.segments, cell_size=max(cfg.max_distance / 3.0, 1.0))
        self.cos, self.sin = ray_directions(cfg.n_rays)

    def _check_outside(self, p):
        for b in self.city.buildings:
            if point_in_polygon(p, b.footprint):
                raise DomainError(f"point {tuple(p)} lies inside building {b.id}")

    def _openness(self, dist, height) -> float:
        hit = np.isfinite(dist)
        rise = np.maximum(np.where(hit, height, 0.0) - self.cfg.eye_height, 0.0)
        with np.errstate(invalid="ignore"):
            phi = np.arctan2(rise, np.where(hit, dist, 1.0))
        open_ = np.where(hit, 1.0 - phi / (math.pi / 2.0), 1.0)
        return float(np.mean(open_))

    def ratio(self, p, *, check: bool = True) -> float:
        px, py = float(p[0]), float(p[1])
        if check:
            self._check_outside((px, py))
        r = self.cfg.max_distance
        idx = self.index.query(px - r, py - r, px + r, py + r)
        dist, height = nearest_hits(px, py, self.cos, self.sin, self.segments.subset(idx), r)
        return self._openness(dist, height)

    def ratio_naive(self, p) -> float:
        """Same quantity intersecting every ray with every edge; no index."""
        px, py = float(p[0]), float(p[1])
        self._check_outside((px, py))
        dist, height = nearest_hits(px, py, self.cos, self.sin, self.segments, self.cfg.max_distance)
        return self._openness(dist, height)


def visibility_ratio(p, city: City, cfg: PerceptionConfig = PerceptionConfig(),
                     field: VisibilityField | None = None) -> float:
    if field is None:
        field = VisibilityField(city, cfg)
    return field.ratio(p)


def curvature(p_prev, p, p_next) -> float:
    """Signed turning angle at ``p`` divided by pi; left turns positive, U-turn = +1."""
    ax, ay = p[0] - p_prev[0], p[1] - p_prev[1]
    bx, by = p_next[0] - p[0], p_next[1] - p[1]
    if (ax == 0 and ay == 0) or (bx == 0 and by == 0):
        raise DomainError("curvature needs three points with no consecutive duplicates")
    cross = ax * by - ay * bx
    dot = ax * bx + ay * by
    if cross == 0 and dot < 0:
        return 1.0
    return math.atan2(cross, dot) / math.pi


def featurize_trajectory(traj, city: City, cfg: PerceptionConfig = PerceptionConfig(),
                         field: VisibilityField | None = None,
                         cache: dict | None = None) -> np.ndarray:
    """Return an ``(len(traj), 2)`` array of (visibility, curvature) per node."""
    net = city.network
    if len(traj) < 2:
        raise DomainError("trajectory needs at least 2 nodes")
    for n in traj:
        if not net.has_node(n):
            raise DomainError(f"node {n} is not in the street network")
    if field is None:
        field = VisibilityField(city, cfg)
    pts = [net.position(n) for n in traj]
    out = np.zeros((len(traj), 2))
    for t, n in enumerate(traj):
        if cache is not None and n in cache:
            vis = cache[n]
        else:
            vis = field.ratio(pts[t])
            if cache is not None:
                cache[n] = vis
        out[t, 0] = vis
        if 0 < t < len(traj) - 1:
            out[t, 1] = curvature(pts[t - 1], pts[t], pts[t + 1])
    return out


@dataclass
class ExposureMap:
    x: np.ndarray  # cell-centre x coordinates, shape (nx,)
    y: np.ndarray  # shape (ny,)
    values: np.ndarray  # shape (ny, nx); nan where the centre is inside a building
    grid_step: float


def exposure_map(city: City, cfg: PerceptionConfig = PerceptionConfig(),
                 grid_step: float = 10.0) -> ExposureMap:
    """Visibility sampled at cell centres tiling the city bounding box."""
    if not grid_step > 0:
        raise ParameterError("grid_step", "must be > 0")
    field = VisibilityField(city, cfg)
    x0, y0, x1, y1 = city.bbox()
    nx = max(1, math.ceil((x1 - x0) / grid_step - 1e-9))
    ny = max(1, math.ceil((y1 - y0) / grid_step - 1e-9))
    xs = x0 + (np.arange(nx) + 0.5) * grid_step
    ys = y0 + (np.arange(ny) + 0.5) * grid_step
    values = np.full((ny, nx), np.nan)
    for j, y in enumerate(ys):
        for i, x in enumerate(xs):
            p = (float(x), float(y))
            if any(point_in_polygon(p, b.footprint) for b in city.buildings):
                continue
            values[j, i] = field.ratio(p, check=False)
    return ExposureMap(xs, ys, values, grid_step)


def exposure_csv(emap: ExposureMap) -> str:
    lines = ["x,y,visibility"]
    for j, y in enumerate(emap.y):
        for i, x in enumerate(emap.x):
            v = emap.values[j, i]
            lines.append(f"{x!r},{y!r},{'NA' if np.isnan(v) else repr(float(v))}")
    return "\n".join(lines) + "\n"
