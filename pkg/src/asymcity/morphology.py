"""Synthetic city generation (grid and radial layouts) and city file I/O."""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, SchemaError, ValidationError
from .geometry import centroid, is_simple_polygon, point_in_polygon, signed_area

LAYOUTS = ("grid", "radial", "imported")
HEIGHT_MODES = ("uniform", "gradient", "random", "imported")


@dataclass
class Building:
    id: int
    footprint: list[tuple[float, float]]
    height: float

    @property
    def centroid(self) -> tuple[float, float]:
        return centroid(self.footprint)


@dataclass
class StreetNetwork:
    nodes: list[tuple[int, float, float]]
    edges: list[tuple[int, int]]

    def __post_init__(self):
        self._pos = {nid: (x, y) for nid, x, y in self.nodes}
        self._adj: dict[int, list[int]] = {nid: [] for nid, _, _ in self.nodes}
        for a, b in self.edges:
            if a in self._adj and b in self._adj:
                self._adj[a].append(b)
                self._adj[b].append(a)
        for nbrs in self._adj.values():
            nbrs.sort()

    def position(self, node_id: int) -> tuple[float, float]:
        return self._pos[node_id]

    def neighbors(self, node_id: int) -> list[int]:
        return self._adj[node_id]

    def has_node(self, node_id: int) -> bool:
        return node_id in self._pos

    def has_edge(self, a: int, b: int) -> bool:
        return b in self._adj.get(a, ())

    @property
    def node_ids(self) -> list[int]:
        return [n for n, _, _ in self.nodes]

    def is_connected(self) -> bool:
        if not self.nodes:
            return True
        start = self.nodes[0][0]
        seen = {start}
        queue = deque([start])
        while queue:
            cur = queue.popleft()
            for nxt in self._adj[cur]:
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        return len(seen) == len(self.nodes)


@dataclass
class CityMeta:
    layout: str
    height_mode: str
    seed: int = 0


@dataclass
class City:
    buildings: list[Building]
    network: StreetNetwork
    meta: CityMeta

    def bbox(self) -> tuple[float, float, float, float]:
        xs = [x for _, x, _ in self.network.nodes]
        ys = [y for _, _, y in self.network.nodes]
        for b in self.buildings:
            xs.extend(p[0] for p in b.footprint)
            ys.extend(p[1] for p in b.footprint)
        return min(xs), min(ys), max(xs), max(ys)


@dataclass
class GridParams:
    blocks_per_side: int = 8
    block_pitch: float = 100.0
    building_inset: float = 10.0
    h_uniform: float = 30.0
    h_min: float = 10.0
    h_max: float = 60.0

    def validate(self):
        if self.blocks_per_side < 2:
            raise ParameterError("blocks_per_side", "must be >= 2")
        if self.block_pitch <= 0:
            raise ParameterError("block_pitch", "must be > 0")
        if not 0 < self.building_inset < self.block_pitch / 2:
            raise ParameterError("building_inset", "must lie in (0, block_pitch/2)")
        _validate_heights(self)


@dataclass
class RadialParams:
    rings: int = 5
    ring_spacing: float = 100.0
    avenues: int = 12
    building_inset: float = 10.0
    h_uniform: float = 30.0
    h_min: float = 10.0
    h_max: float = 60.0

    def validate(self):
        if self.rings < 2:
            raise ParameterError("rings", "must be >= 2")
        if self.avenues < 3:
            raise ParameterError("avenues", "must be >= 3")
        if self.ring_spacing <= 0:
            raise ParameterError("ring_spacing", "must be > 0")
        if not 0 < self.building_inset < self.ring_spacing / 2:
            raise ParameterError("building_inset", "must lie in (0, ring_spacing/2)")
        _validate_heights(self)


def _validate_heights(p):
    if p.h_uniform <= 0:
        raise ParameterError("h_uniform", "must be > 0")
    if not 0 < p.h_min < p.h_max:
        raise ParameterError("h_min", "require 0 < h_min < h_max")


def generate_grid_city(params: GridParams, seed: int = 0) -> City:
    """Square lattice of streets with one inset square building per block."""
    params.validate()
    n = params.blocks_per_side
    pitch = float(params.block_pitch)
    inset = float(params.building_inset)

    nodes = []
    for j in range(n + 1):
        for i in range(n + 1):
            nodes.append((j * (n + 1) + i, i * pitch, j * pitch))
    edges = []
    for j in range(n + 1):
        for i in range(n):
            a = j * (n + 1) + i
            edges.append((a, a + 1))
    for j in range(n):
        for i in range(n + 1):
            a = j * (n + 1) + i
            edges.append((a, a + n + 1))

    buildings = []
    for j in range(n):
        for i in range(n):
            x0, y0 = i * pitch + inset, j * pitch + inset
            x1, y1 = (i + 1) * pitch - inset, (j + 1) * pitch - inset
            fp = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
            buildings.append(Building(j * n + i, fp, float(params.h_uniform)))

    return City(buildings, StreetNetwork(nodes, edges), CityMeta("grid", "uniform", seed))


def _line_intersection(p1, d1, p2, d2):
    cross = d1[0] * d2[1] - d1[1] * d2[0]
    wx, wy = p2[0] - p1[0], p2[1] - p1[1]
    t = (wx * d2[1] - wy * d2[0]) / cross
    return (p1[0] + t * d1[0], p1[1] + t * d1[1])


def inset_convex_polygon(poly, d: float):
    """Shift every edge of a CCW convex polygon inward by ``d``."""
    n = len(poly)
    lines = []
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        dx, dy = b[0] - a[0], b[1] - a[1]
        length = math.hypot(dx, dy)
        nx, ny = -dy / length, dx / length  # left normal points inward for CCW
        lines.append(((a[0] + d * nx, a[1] + d * ny), (dx, dy)))
    out = []
    for i in range(n):
        p_prev, d_prev = lines[i - 1]
        p_cur, d_cur = lines[i]
        out.append(_line_intersection(p_prev, d_prev, p_cur, d_cur))
    return out


def generate_radial_city(params: RadialParams, seed: int = 0) -> City:
    """Concentric rings of straight chords crossed by radial avenues."""
    params.validate()
    R, A = params.rings, params.avenues
    sp = float(params.ring_spacing)

    def node_id(r, a):
        return 1 + (r - 1) * A + (a % A)

    pos = {0: (0.0, 0.0)}
    nodes = [(0, 0.0, 0.0)]
    for r in range(1, R + 1):
        for a in range(A):
            ang = 2.0 * math.pi * a / A
            xy = (r * sp * math.cos(ang), r * sp * math.sin(ang))
            pos[node_id(r, a)] = xy
            nodes.append((node_id(r, a), xy[0], xy[1]))

    edges = []
    for a in range(A):
        edges.append((0, node_id(1, a)))
        for r in range(1, R):
            edges.append((node_id(r, a), node_id(r + 1, a)))
    for r in range(1, R + 1):
        for a in range(A):
            u, v = node_id(r, a), node_id(r, a + 1)
            edges.append((min(u, v), max(u, v)))

    buildings = []
    for r in range(1, R):
        for a in range(A):
            cell = [pos[node_id(r, a)], pos[node_id(r + 1, a)],
                    pos[node_id(r + 1, a + 1)], pos[node_id(r, a + 1)]]
            if signed_area(cell) < 0:
                cell.reverse()
            fp = inset_convex_polygon(cell, float(params.building_inset))
            buildings.append(Building(len(buildings), fp, float(params.h_uniform)))

    return City(buildings, StreetNetwork(nodes, edges), CityMeta("radial", "uniform", seed))


def assign_heights(city: City, mode: str, seed: int = 0, *, h_uniform: float = 30.0,
                   h_min: float = 10.0, h_max: float = 60.0) -> City:
    """Return a copy of ``city`` with building heights set by ``mode``."""
    if mode not in ("uniform", "gradient", "random"):
        raise ParameterError("height_mode", f"unknown mode {mode!r}; expected uniform, gradient or random")
    if not city.buildings:
        raise ParameterError("buildings", "city has no buildings")
    order = sorted(city.buildings, key=lambda b: b.id)

    if mode == "uniform":
        heights = {b.id: float(h_uniform) for b in order}
    elif mode == "random":
        rng = np.random.default_rng(seed)
        draws = rng.uniform(h_min, h_max, size=len(order))
        heights = {b.id: float(h) for b, h in zip(order, draws)}
    elif city.meta.layout == "radial":
        radii = {b.id: math.hypot(*b.centroid) for b in order}
        r_max = max(radii.values())
        heights = {i: h_max - (h_max - h_min) * (r / r_max) for i, r in radii.items()}
    else:
        cx = {b.id: b.centroid[0] for b in order}
        x_min, x_max = min(cx.values()), max(cx.values())
        span = x_max - x_min
        heights = {i: (h_min + (h_max - h_min) * (x - x_min) / span) if span > 0 else float(h_min)
                   for i, x in cx.items()}

    buildings = [Building(b.id, list(b.footprint), heights[b.id]) for b in city.buildings]
    meta = CityMeta(city.meta.layout, mode, city.meta.seed)
    return City(buildings, city.network, meta)


def validate_city(city: City) -> None:
    """Raise :class:`ValidationError` if any City invariant is violated."""
    ids = [b.id for b in city.buildings]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate building ids")
    for b in city.buildings:
        if len(b.footprint) < 3:
            raise ValidationError(f"building {b.id}: footprint needs >= 3 vertices")
        if not (b.height > 0 and math.isfinite(b.height)):
            raise ValidationError(f"building {b.id}: height must be > 0")
        if not is_simple_polygon(b.footprint):
            raise ValidationError(f"building {b.id}: footprint is not a simple polygon")
        if signed_area(b.footprint) <= 0:
            raise ValidationError(f"building {b.id}: footprint must be counter-clockwise")

    net = city.network
    node_ids = net.node_ids
    if len(set(node_ids)) != len(node_ids):
        raise ValidationError("duplicate node ids")
    known = set(node_ids)
    for a, b in net.edges:
        if a not in known or b not in known:
            missing = a if a not in known else b
            raise ValidationError(f"edge ({a}, {b}) references missing node {missing}")
        if a == b:
            raise ValidationError(f"edge ({a}, {b}) is a self-loop")
    if not net.is_connected():
        raise ValidationError("street network is not connected")
    for nid, x, y in net.nodes:
        for b in city.buildings:
            if point_in_polygon((x, y), b.footprint):
                raise ValidationError(f"node {nid} lies inside building {b.id}")
    if city.meta.layout not in LAYOUTS:
        raise ValidationError(f"unknown layout {city.meta.layout!r}")
    if city.meta.height_mode not in HEIGHT_MODES:
        raise ValidationError(f"unknown height_mode {city.meta.height_mode!r}")


def export_city(city: City) -> dict:
    """Canonical document form of a city (see the City file schema)."""
    return {
        "meta": {"layout": city.meta.layout, "height_mode": city.meta.height_mode,
                 "seed": int(city.meta.seed)},
        "buildings": [
            {"id": int(b.id), "footprint": [[float(x), float(y)] for x, y in b.footprint],
             "height": float(b.height)}
            for b in sorted(city.buildings, key=lambda b: b.id)
        ],
        "network": {
            "nodes": [{"id": int(n), "x": float(x), "y": float(y)}
                      for n, x, y in sorted(city.network.nodes)],
            "edges": [[int(a), int(b)] for a, b in city.network.edges],
        },
    }


def dumps_city(city: City) -> str:
    return json.dumps(export_city(city), indent=1) + "\n"


def _expect(cond, path, msg):
    if not cond:
        raise SchemaError(path, msg)


def _number(v, path):
    _expect(isinstance(v, (int, float)) and not isinstance(v, bool), path, "expected a number")
    return float(v)


def _integer(v, path):
    _expect(isinstance(v, int) and not isinstance(v, bool), path, "expected an integer")
    return int(v)


def import_city(document) -> City:
    """Parse and validate a city document (dict or JSON text).

    Imported cities are always tagged ``layout="imported"``; the height mode
    is kept when it is one of the known modes.
    """
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SchemaError("$", f"not valid JSON: {exc}") from None
    _expect(isinstance(document, dict), "$", "expected an object")
    for key in ("meta", "buildings", "network"):
        _expect(key in document, f"$.{key}", "missing field")

    meta = document["meta"]
    _expect(isinstance(meta, dict), "$.meta", "expected an object")
    height_mode = meta.get("height_mode", "imported")
    _expect(isinstance(height_mode, str), "$.meta.height_mode", "expected a string")
    if height_mode not in HEIGHT_MODES:
        height_mode = "imported"
    seed = _integer(meta.get("seed", 0), "$.meta.seed")

    blist = document["buildings"]
    _expect(isinstance(blist, list), "$.buildings", "expected a list")
    buildings = []
    for i, b in enumerate(blist):
        p = f"$.buildings[{i}]"
        _expect(isinstance(b, dict), p, "expected an object")
        for key in ("id", "footprint", "height"):
            _expect(key in b, f"{p}.{key}", "missing field")
        fp = b["footprint"]
        _expect(isinstance(fp, list), f"{p}.footprint", "expected a list of points")
        pts = []
        for j, pt in enumerate(fp):
            pp = f"{p}.footprint[{j}]"
            _expect(isinstance(pt, list) and len(pt) == 2, pp, "expected [x, y]")
            pts.append((_number(pt[0], pp + "[0]"), _number(pt[1], pp + "[1]")))
        buildings.append(Building(_integer(b["id"], f"{p}.id"), pts, _number(b["height"], f"{p}.height")))

    net = document["network"]
    _expect(isinstance(net, dict), "$.network", "expected an object")
    _expect("nodes" in net, "$.network.nodes", "missing field")
    _expect("edges" in net, "$.network.edges", "missing field")
    _expect(isinstance(net["nodes"], list), "$.network.nodes", "expected a list")
    _expect(isinstance(net["edges"], list), "$.network.edges", "expected a list")
    nodes = []
    for i, n in enumerate(net["nodes"]):
        p = f"$.network.nodes[{i}]"
        _expect(isinstance(n, dict), p, "expected an object")
        for key in ("id", "x", "y"):
            _expect(key in n, f"{p}.{key}", "missing field")
        nodes.append((_integer(n["id"], f"{p}.id"), _number(n["x"], f"{p}.x"), _number(n["y"], f"{p}.y")))
    edges = []
    for i, e in enumerate(net["edges"]):
        p = f"$.network.edges[{i}]"
        _expect(isinstance(e, list) and len(e) == 2, p, "expected [a, b]")
        edges.append((_integer(e[0], p + "[0]"), _integer(e[1], p + "[1]")))

    city = City(buildings, StreetNetwork(nodes, edges), CityMeta("imported", height_mode, seed))
    validate_city(city)
    return city


def load_city(path) -> City:
    """Read a city file. Files tagged grid/radial keep their layout tag."""
    with open(path) as fh:
        doc = json.load(fh)
    city = import_city(doc)
    layout = doc.get("meta", {}).get("layout")
    if layout in ("grid", "radial"):
        city.meta.layout = layout
    return city


def save_city(city: City, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_city(city))
