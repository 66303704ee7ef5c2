from __future__ import annotations

import math
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from foggis.geodata import (
    BoundingBox,
    Crs,
    FeatureRecord,
    Point,
    Polygon,
    PolyLine,
    RasterGrid,
    VectorLayer,
    write_shapefile,
)
from foggis.overlay import (
    BadRequest,
    ClipOp,
    CrsMismatch,
    DisjointExtent,
    EmptyExtent,
    InvalidPolygon,
    NonConvexRegion,
    OverlayRequest,
    RenderOp,
    SpatialJoinOp,
    UnknownAttribute,
    ZonalStatsOp,
    clip,
    point_in_polygon,
    polygon_area,
    render_composite,
    result_to_json,
    run_overlay,
    spatial_join,
    zonal_stats,
)

from oracles import convex_ring, fan_area, inside_oracle, pip_numpy, star_polygon

SQUARE = Polygon([[(0, 0), (1, 0), (1, 1), (0, 1), (0, 0)]])
DONUT = Polygon([[(0, 0), (4, 0), (4, 4), (0, 4), (0, 0)], [(1, 1), (1, 3), (3, 3), (3, 1), (1, 1)]])


def layer(kind, geoms, attrs=None, crs=Crs(2964), name="l"):
    attrs = attrs or [{} for _ in geoms]
    return VectorLayer.from_features(name, kind, [FeatureRecord(g, a) for g, a in zip(geoms, attrs)], crs)


# --- point in polygon ------------------------------------------------------------------


def test_pip_examples():
    assert point_in_polygon(Point(0.5, 0.5), SQUARE)
    assert not point_in_polygon(Point(2, 2), SQUARE)
    assert point_in_polygon((1, 0.5), SQUARE)  # on an edge
    assert point_in_polygon((1, 1), SQUARE)  # on a vertex
    assert not point_in_polygon((2, 2), DONUT)  # inside the hole
    assert point_in_polygon((1, 2), DONUT)  # on the hole boundary
    assert point_in_polygon((0.5, 0.5), DONUT)
    with pytest.raises(InvalidPolygon):
        point_in_polygon((0, 0), Polygon([[(0, 0), (1, 0), (1, 1)]]))


def test_pip_matches_winding_oracle_1000_points():
    rng = random.Random(3)
    ring = star_polygon(rng, 0, 0, 0.3, 1.0, 20)
    poly = Polygon([ring])
    for _ in range(1000):
        x, y = rng.uniform(-1.1, 1.1), rng.uniform(-1.1, 1.1)
        assert point_in_polygon((x, y), poly) == inside_oracle(x, y, poly.rings)


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1))
def test_pip_with_holes_matches_oracle(seed):
    rng = random.Random(seed)
    outer = star_polygon(rng, 0, 0, 2.0, 3.0, rng.randrange(3, 30))
    hole = star_polygon(rng, 0, 0, 0.5, 1.5, rng.randrange(3, 12))[::-1]
    poly = Polygon([outer, hole])
    for _ in range(50):
        x, y = rng.uniform(-3.2, 3.2), rng.uniform(-3.2, 3.2)
        assert point_in_polygon((x, y), poly) == inside_oracle(x, y, poly.rings)


# --- area ------------------------------------------------------------------------------


def test_area_examples():
    assert polygon_area(SQUARE) == 1.0
    holed = Polygon([[(0, 0), (1, 0), (1, 1), (0, 1), (0, 0)],
                     [(0.25, 0.25), (0.75, 0.25), (0.75, 0.75), (0.25, 0.75), (0.25, 0.25)]])
    assert polygon_area(holed) == 0.75  # same orientation as the shell: still subtracted
    assert polygon_area(DONUT) == 12.0


@pytest.mark.parametrize("seed", range(30))
def test_area_matches_fan_triangulation(seed):
    rng = random.Random(seed)
    ring = star_polygon(rng, rng.uniform(-1e3, 1e3), rng.uniform(-1e3, 1e3), 1.0, 50.0, rng.randrange(3, 60))
    ring = ring if seed % 2 else ring[::-1]
    oracle = float(fan_area(ring))
    assert math.isclose(polygon_area(Polygon([ring])), oracle, rel_tol=1e-9)


# --- spatial join ----------------------------------------------------------------------


def test_join_examples():
    pts = layer("point", [Point(0.5, 0.5), Point(2, 2), Point(1, 1)], [{"ID": 1}, {"ID": 2}, {"ID": 3}])
    polys = layer("polygon", [SQUARE], [{"name": "sq", "other": 9}])
    out = spatial_join(pts, polys, ["name"])
    assert [f.attributes for f in out.features] == [
        {"ID": 1, "name": "sq"}, {"ID": 2, "name": None}, {"ID": 3, "name": "sq"}]
    assert len(spatial_join(layer("point", []), polys, ["name"])) == 0
    # default carries every polygon attribute
    assert set(spatial_join(pts, polys).features[0].attributes) == {"ID", "name", "other"}
    assert spatial_join(spatial_join(pts, polys), polys) == spatial_join(pts, polys)
    with pytest.raises(UnknownAttribute):
        spatial_join(pts, polys, ["nope"])
    with pytest.raises(CrsMismatch):
        spatial_join(pts, layer("polygon", [SQUARE], crs=Crs(4326)))
    with pytest.raises(BadRequest):
        spatial_join(polys, pts)


def test_join_first_polygon_wins():
    pts = layer("point", [Point(0.5, 0.5)])
    polys = layer("polygon", [SQUARE, SQUARE], [{"K": "first"}, {"K": "second"}])
    assert spatial_join(pts, polys).features[0].attributes == {"K": "first"}


# --- clip --------------------------------------------------------------------------------


def test_clip_examples():
    sq = layer("polygon", [SQUARE])
    out = clip(sq, BoundingBox(0.5, 0, 2, 2))
    assert polygon_area(out.features[0].geometry) == 0.5
    assert out.bbox.as_tuple() == (0.5, 0.0, 1.0, 1.0)
    inside = clip(sq, BoundingBox(-1, -1, 5, 5))
    assert inside.features[0].geometry == SQUARE
    assert len(clip(sq, BoundingBox(3, 3, 4, 4))) == 0
    with pytest.raises(NonConvexRegion):
        clip(sq, Polygon([[(0, 0), (4, 0), (4, 4), (2, 1), (0, 4), (0, 0)]]))
    with pytest.raises(CrsMismatch):
        clip(sq, BoundingBox(0, 0, 1, 1), region_crs=Crs(4326))


def test_clip_points_and_lines():
    pts = layer("point", [Point(0.5, 0.5), Point(3, 3), Point(1, 1)])
    assert [f.geometry for f in clip(pts, BoundingBox(0, 0, 1, 1)).features] == [Point(0.5, 0.5), Point(1, 1)]
    line = layer("polyline", [PolyLine([[(-1, 0.5), (2, 0.5), (2, 0.8), (-1, 0.8)]])])
    out = clip(line, BoundingBox(0, 0, 1, 1)).features[0].geometry
    assert out == PolyLine([[(0.0, 0.5), (1.0, 0.5)], [(1.0, 0.8), (0.0, 0.8)]])


def test_clip_vertices_inside_region():
    rng = random.Random(11)
    for _ in range(200):
        region = convex_ring(rng, rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.3, 2), rng.randrange(3, 12))
        subj = layer("polygon", [Polygon([star_polygon(rng, 0, 0, 0.2, 1.5, rng.randrange(3, 25))])])
        out = clip(subj, Polygon([region]))
        for f in out.features:
            for x, y in f.geometry.rings[0]:
                for (ax, ay), (bx, by) in zip(region, region[1:]):
                    edge = math.hypot(bx - ax, by - ay)
                    # signed distance to the left of each CCW edge must be >= -1e-9
                    assert ((bx - ax) * (y - ay) - (by - ay) * (x - ax)) / edge >= -1e-9


@pytest.mark.parametrize("seed", range(3))
def test_clip_area_matches_monte_carlo(seed):
    rng = random.Random(seed)
    region = convex_ring(rng, 0.2, -0.1, 1.0, 9)
    subject = star_polygon(rng, 0, 0, 0.4, 1.3, 24)
    out = clip(layer("polygon", [Polygon([subject])]), Polygon([region]))
    area = sum(polygon_area(f.geometry) for f in out.features)

    xs_all = [x for x, _ in region]
    ys_all = [y for _, y in region]
    box = (min(xs_all), min(ys_all), max(xs_all), max(ys_all))
    gen = np.random.default_rng(seed)
    n = 1_000_000
    xs = gen.uniform(box[0], box[2], n)
    ys = gen.uniform(box[1], box[3], n)
    hits = pip_numpy(xs, ys, region) & pip_numpy(xs, ys, subject)
    estimate = hits.mean() * (box[2] - box[0]) * (box[3] - box[1])
    assert abs(area - estimate) / estimate < 0.01


def test_bbox_clip_equals_polygon_clip_bytes():
    rng = random.Random(5)
    geoms = [Polygon([star_polygon(rng, rng.uniform(0, 10), rng.uniform(0, 10), 0.5, 3, 15)]) for _ in range(30)]
    lyr = layer("polygon", geoms, [{"I": i} for i in range(30)])
    box = BoundingBox(2.0, 1.5, 8.25, 7.0)
    corners = [(2.0, 1.5), (8.25, 1.5), (8.25, 7.0), (2.0, 7.0)]
    via_box = write_shapefile(clip(lyr, box))
    for start in range(4):
        for ring in (corners[start:] + corners[:start], (corners[start:] + corners[:start])[::-1]):
            assert write_shapefile(clip(lyr, Polygon([ring + [ring[0]]]))) == via_box


# --- zonal statistics --------------------------------------------------------------------


def _grid(cells: np.ndarray, origin=(0.0, 0.0), cs=1.0, nodata=-9999.0, crs=Crs(2964)) -> RasterGrid:
    rows, cols = cells.shape
    return RasterGrid(cols, rows, origin[0], origin[1], cs, nodata, cells.reshape(-1).astype(np.float32), crs)


def test_zonal_examples():
    const = _grid(np.full((10, 10), 5.0))
    s = zonal_stats(const, Polygon([[(2, 2), (7, 2), (7, 6), (2, 2)]]))
    assert (s.min, s.max, s.mean) == (5.0, 5.0, 5.0) and s.count > 0
    empty = zonal_stats(const, Polygon([[(2.1, 2.1), (2.4, 2.1), (2.4, 2.4), (2.1, 2.1)]]))
    assert empty.count == 0 and empty.min is None and empty.mean is None
    with pytest.raises(DisjointExtent):
        zonal_stats(const, Polygon([[(20, 20), (21, 20), (21, 21), (20, 20)]]))
    with pytest.raises(CrsMismatch):
        zonal_stats(const, SQUARE, zone_crs=Crs(4326))


def test_zonal_excludes_nodata():
    cells = np.arange(16, dtype=float).reshape(4, 4)
    cells[0, 0] = -9999.0
    s = zonal_stats(_grid(cells), Polygon([[(0, 0), (4, 0), (4, 4), (0, 4), (0, 0)]]))
    assert s.count == 15 and s.min == 1.0 and s.sum == sum(range(1, 16))


def test_zonal_mean_times_count_consistency():
    rng = np.random.default_rng(2)
    g = _grid(rng.normal(100, 30, (40, 40)))
    s = zonal_stats(g, Polygon([star_polygon(random.Random(1), 20, 20, 5, 18, 30)]))
    assert s.mean == s.sum / s.count
    assert math.isclose(s.mean * s.count, s.sum, rel_tol=1e-15)


# --- render ------------------------------------------------------------------------------


def _pixels(ppm: bytes, w: int, h: int) -> np.ndarray:
    header = f"P6\n{w} {h}\n255\n".encode()
    assert ppm.startswith(header)
    return np.frombuffer(ppm[len(header):], dtype=np.uint8).reshape(h, w, 3)


def test_render_blank_4x4():
    ppm = render_composite(BoundingBox(0, 0, 1, 1), 4, 4)
    assert ppm == b"P6\n4 4\n255\n" + b"\xff" * 48
    assert len(ppm) == 11 + 48


def test_render_center_point_101():
    ppm = render_composite(BoundingBox(0, 0, 100, 100), 101, 101, [layer("point", [Point(50, 50)])])
    px = _pixels(ppm, 101, 101)
    black = np.argwhere((px == 0).all(axis=2))
    assert black.min(axis=0).tolist() == [49, 49] and black.max(axis=0).tolist() == [51, 51]
    assert len(black) == 9


def test_render_orientation_and_raster():
    cells = np.array([[0.0, 10.0], [20.0, -9999.0]])  # row 0 = bottom
    g = _grid(cells)
    px = _pixels(render_composite(BoundingBox(0, 0, 2, 2), 2, 2, raster=g), 2, 2)
    assert px[1, 0].tolist() == [0, 0, 0]  # bottom-left = min value
    assert px[0, 1].tolist() == [255, 255, 255]  # top-right nodata = white
    assert px[0, 0].tolist() == [255, 255, 255]  # top-left = max value
    assert 0 < px[1, 1, 0] < 255


def test_render_errors_and_determinism():
    with pytest.raises(EmptyExtent):
        render_composite(BoundingBox(0, 0, 0, 1), 4, 4)
    with pytest.raises(BadRequest):
        render_composite(BoundingBox(0, 0, 1, 1), 0, 4)
    lyr = layer("polygon", [DONUT])
    a = render_composite(BoundingBox(-1, -1, 5, 5), 64, 48, [lyr])
    assert a == render_composite(BoundingBox(-1, -1, 5, 5), 64, 48, [lyr])


def test_render_clips_lines_far_outside():
    far = layer("polyline", [PolyLine([[(-1e12, 0.5), (1e12, 0.5)]])])
    px = _pixels(render_composite(BoundingBox(0, 0, 1, 1), 10, 10, [far]), 10, 10)
    assert (px == 0).all(axis=2).sum() == 10


# --- request plumbing ------------------------------------------------------------------


def test_request_json_roundtrip_and_run():
    layers = {"pts": layer("point", [Point(0.5, 0.5)], [{"A": 1}]),
              "sq": layer("polygon", [SQUARE], [{"N": "x"}]),
              "g": _grid(np.full((2, 2), 3.0))}
    reqs = [
        OverlayRequest(SpatialJoinOp("pts", "sq", ("N",))),
        OverlayRequest(ClipOp("sq", BoundingBox(0, 0, 0.5, 0.5))),
        OverlayRequest(ClipOp("sq", Polygon([[(0, 0), (1, 0), (0, 1), (0, 0)]]))),
        OverlayRequest(ZonalStatsOp("g", "sq")),
        OverlayRequest(RenderOp(BoundingBox(0, 0, 2, 2), 8, 8), ("g", "sq", "pts")),
    ]
    for req in reqs:
        again = OverlayRequest.from_json(req.to_json())
        assert again == req
        result = run_overlay(again, layers.__getitem__)
        if isinstance(req.operation, RenderOp):
            assert result.data.startswith(b"P6\n8 8\n255\n")
        else:
            assert result_to_json(result)["type"] in ("joined", "clipped", "stats")
    mixed = dict(layers, sq=layer("polygon", [SQUARE], crs=Crs(4326)))
    with pytest.raises(CrsMismatch):
        run_overlay(reqs[0], mixed.__getitem__)
    with pytest.raises(BadRequest):
        OverlayRequest.from_json({"operation": {"type": "buffer"}})
