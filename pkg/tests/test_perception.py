import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asymcity.errors import DomainError, ParameterError
from asymcity.geometry import point_in_polygon
from asymcity.morphology import GridParams, assign_heights, generate_grid_city
from asymcity.perception import (PerceptionConfig, VisibilityField, curvature, exposure_map,
                                 featurize_trajectory, visibility_ratio)

from conftest import make_scene


def brute_visibility(p, buildings, n_rays=36, max_distance=150.0, eye=1.6):
    """Scalar oracle: every ray against every edge, plain floats."""
    total = 0.0
    for j in range(n_rays):
        a = 2 * math.pi * j / n_rays
        ux, uy = math.cos(a), math.sin(a)
        best_t, best_h = math.inf, None
        for fp, h in buildings:
            for i in range(len(fp)):
                (ax, ay), (bx, by) = fp[i], fp[(i + 1) % len(fp)]
                ex, ey = bx - ax, by - ay
                den = ux * ey - uy * ex
                if den == 0:
                    continue
                wx, wy = ax - p[0], ay - p[1]
                t = (wx * ey - wy * ex) / den
                s = (wx * uy - wy * ux) / den
                if 0 <= t <= max_distance and -1e-12 <= s <= 1 + 1e-12:
                    if t < best_t or (t == best_t and h > best_h):
                        best_t, best_h = t, h
        if best_h is None:
            total += 1.0
        else:
            total += 1.0 - math.atan2(max(best_h - eye, 0.0), best_t) / (math.pi / 2)
    return total / n_rays


def fan_scene(eye=1.6):
    """Building whose near face has vertices on the r=10 circle exactly at rays 0..8."""
    inner = [(10 * math.cos(2 * math.pi * j / 36), 10 * math.sin(2 * math.pi * j / 36)) for j in range(9)]
    outer = [(20 * math.cos(2 * math.pi * j / 36), 20 * math.sin(2 * math.pi * j / 36)) for j in range(8, -1, -1)]
    fp = inner + outer
    return [(fp, eye + 10.0)]


def random_scene(rng, n=None):
    buildings = []
    for _ in range(n if n is not None else rng.integers(0, 8)):
        cx, cy = rng.uniform(-120, 120, 2)
        w, h = rng.uniform(5, 40, 2)
        ang = rng.uniform(0, math.pi)
        c, s = math.cos(ang), math.sin(ang)
        corners = [(-w, -h), (w, -h), (w, h), (-w, h)]
        fp = [(cx + c * x - s * y, cy + s * x + c * y) for x, y in corners]
        buildings.append((fp, float(rng.uniform(0.5, 80))))
    return buildings


def outside_point(rng, buildings):
    while True:
        p = tuple(rng.uniform(-100, 100, 2))
        if not any(point_in_polygon(p, fp) for fp, _ in buildings):
            return p


def test_empty_city_fully_visible():
    assert visibility_ratio((3.0, -2.0), make_scene([])) == 1.0


def test_constructed_fan_case():
    bs = fan_scene()
    city = make_scene(bs)
    # 27 open rays, 9 rays at d=10 against a 10 m rise
    expected = (27 + 9 * 0.5) / 36
    assert expected == 0.875
    assert brute_visibility((0.0, 0.0), bs) == pytest.approx(0.875, abs=1e-12)
    assert visibility_ratio((0.0, 0.0), city) == pytest.approx(0.875, abs=1e-12)


def test_low_buildings_do_not_occlude():
    bs = [(fp, 1.6) for fp, _ in fan_scene()] + [([(30, -5), (40, -5), (40, 5), (30, 5)], 1.0)]
    assert visibility_ratio((0.0, 0.0), make_scene(bs)) == 1.0


def test_inside_building_raises():
    city = make_scene([([(0, 0), (10, 0), (10, 10), (0, 10)], 5)])
    with pytest.raises(DomainError):
        visibility_ratio((5.0, 5.0), city)


def test_config_validation():
    with pytest.raises(ParameterError):
        PerceptionConfig(n_rays=3).validate()


def test_index_matches_naive_exactly():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        bs = random_scene(rng)
        field = VisibilityField(make_scene(bs), PerceptionConfig())
        p = outside_point(rng, bs)
        assert field.ratio(p) == field.ratio_naive(p)
        assert field.ratio(p) == pytest.approx(brute_visibility(p, bs), abs=1e-12)


def test_index_matches_naive_generated_city():
    city = assign_heights(generate_grid_city(GridParams(), 0), "random", 3)
    field = VisibilityField(city)
    rng = np.random.default_rng(1)
    for nid, x, y in city.network.nodes:
        assert field.ratio((x, y)) == field.ratio_naive((x, y))
    for _ in range(50):
        p = tuple(rng.uniform(0, 800, 2))
        if any(point_in_polygon(p, b.footprint) for b in city.buildings):
            continue
        assert field.ratio(p) == field.ratio_naive(p)


def _rot90(p):
    return (-p[1], p[0])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_rotation_equivariance(seed):
    rng = np.random.default_rng(seed)
    bs = random_scene(rng)
    p = outside_point(rng, bs)
    rotated = [([_rot90(v) for v in fp], h) for fp, h in bs]
    cfg = PerceptionConfig(n_rays=36)
    a = visibility_ratio(p, make_scene(bs), cfg)
    b = visibility_ratio(_rot90(p), make_scene(rotated), cfg)
    assert a == pytest.approx(b, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_raising_height_never_increases_visibility(seed):
    rng = np.random.default_rng(seed)
    bs = random_scene(rng, n=int(rng.integers(1, 8)))
    p = outside_point(rng, bs)
    before = visibility_ratio(p, make_scene(bs))
    k = int(rng.integers(len(bs)))
    raised = list(bs)
    raised[k] = (bs[k][0], bs[k][1] + float(rng.uniform(0, 50)))
    assert visibility_ratio(p, make_scene(raised)) <= before


def test_curvature_cases():
    assert curvature((0, 0), (1, 0), (2, 0)) == 0.0
    assert curvature((0, 0), (1, 0), (1, 1)) == 0.5
    assert curvature((0, 0), (1, 0), (1, -1)) == -0.5
    assert curvature((0, 0), (1, 0), (0, 0)) == 1.0


def test_curvature_coincident():
    with pytest.raises(DomainError):
        curvature((0, 0), (0, 0), (1, 0))


pts = st.tuples(st.floats(-100, 100), st.floats(-100, 100))


@given(pts, pts, pts)
def test_curvature_antisymmetric(a, b, c):
    if a == b or c == b:
        return
    ax, ay = b[0] - a[0], b[1] - a[1]
    bx, by = c[0] - b[0], c[1] - b[1]
    if ax * by - ay * bx == 0 and ax * bx + ay * by < 0:
        return  # U-turn tie-break
    k1 = curvature(a, b, c)
    assert -1 <= k1 <= 1
    assert k1 == pytest.approx(-curvature(c, b, a), abs=1e-12)


def _line_city(coords):
    nodes = [(i, float(x), float(y)) for i, (x, y) in enumerate(coords)]
    edges = [(i, i + 1) for i in range(len(coords) - 1)]
    return make_scene([], nodes, edges)


def test_featurize_straight():
    city = _line_city([(0, 0), (10, 0), (20, 0)])
    np.testing.assert_array_equal(featurize_trajectory([0, 1, 2], city), [[1, 0], [1, 0], [1, 0]])


def test_featurize_l_shape():
    city = _line_city([(0, 0), (10, 0), (10, 10)])
    feats = featurize_trajectory([0, 1, 2], city)
    assert feats[1, 1] == 0.5
    assert feats[0, 1] == 0 and feats[2, 1] == 0


def test_featurize_length_and_unknown_node():
    city = _line_city([(0, 0), (10, 0), (10, 10), (0, 10)])
    assert featurize_trajectory([0, 1, 2, 3, 2], city).shape == (5, 2)
    with pytest.raises(DomainError):
        featurize_trajectory([0, 9], city)


def test_exposure_empty_city():
    city = _line_city([(0, 0), (50, 0), (50, 30)])
    emap = exposure_map(city, grid_step=10)
    assert emap.values.shape == (3, 5)
    assert np.all(emap.values == 1.0)


def test_exposure_grid_uniform_fourfold_symmetry():
    city = generate_grid_city(GridParams(blocks_per_side=4), 0)
    emap = exposure_map(city, grid_step=10)
    v = emap.values
    assert v.shape[0] == v.shape[1]
    n = v.shape[0]
    rot = np.full_like(v, np.nan)
    # (x, y) -> (c - (y - c), x): column j' = n-1-j, row i' = i
    for j in range(n):
        for i in range(n):
            rot[i, n - 1 - j] = v[j, i]
    assert np.array_equal(np.isnan(rot), np.isnan(v))
    mask = ~np.isnan(v)
    assert np.max(np.abs(rot[mask] - v[mask])) < 1e-9
    assert np.all((v[mask] >= 0) & (v[mask] <= 1))
    assert np.isnan(v).any()


def test_exposure_range_random_city():
    city = assign_heights(generate_grid_city(GridParams(blocks_per_side=3), 0), "random", 1)
    v = exposure_map(city, grid_step=15).values
    present = v[~np.isnan(v)]
    assert present.size and np.all((present >= 0) & (present <= 1))
