"""Edge overlay analysis: point-in-polygon, spatial join, convex clipping, zonal
statistics and composite rendering to PPM.

Boundary rule: a point lying exactly on a polygon edge counts as inside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence, Union

import numpy as np

from .geodata import (
    BoundingBox,
    Crs,
    FeatureRecord,
    Point,
    Polygon,
    PolyLine,
    RasterGrid,
    Vertex,
    VectorLayer,
)

MAX_RENDER_PX = 8192
WHITE = (255, 255, 255)
PALETTE = [(0, 0, 0), (200, 30, 30), (30, 60, 200), (0, 140, 60), (150, 0, 150), (0, 140, 140)]


class OverlayError(Exception):
    pass


class InvalidPolygon(OverlayError):
    pass


class CrsMismatch(OverlayError):
    pass


class UnknownAttribute(OverlayError):
    pass


class NonConvexRegion(OverlayError):
    pass


class DisjointExtent(OverlayError):
    pass


class EmptyExtent(OverlayError):
    pass


class BadRequest(OverlayError):
    pass


def _check_polygon(poly: Polygon) -> None:
    if not isinstance(poly, Polygon) or not poly.rings:
        raise InvalidPolygon("polygon has no rings")
    for ring in poly.rings:
        if len(ring) < 4 or ring[0] != ring[-1]:
            raise InvalidPolygon("every ring needs >= 4 vertices and first == last")


def _xy(p) -> Vertex:
    return (p.x, p.y) if isinstance(p, Point) else (p[0], p[1])


# --- point in polygon ------------------------------------------------------


def _on_segment(x, y, ax, ay, bx, by) -> bool:
    if (bx - ax) * (y - ay) - (by - ay) * (x - ax) != 0:
        return False
    return min(ax, bx) <= x <= max(ax, bx) and min(ay, by) <= y <= max(ay, by)


def _ring_parity(x: float, y: float, ring: Sequence[Vertex]) -> bool | None:
    """Even-odd crossing parity of one ring; None when (x, y) lies on the ring."""
    inside = False
    ax, ay = ring[0]
    for bx, by in ring[1:]:
        if _on_segment(x, y, ax, ay, bx, by):
            return None
        if (ay > y) != (by > y) and x < ax + (y - ay) * (bx - ax) / (by - ay):
            inside = not inside
        ax, ay = bx, by
    return inside


def point_in_polygon(p, poly: Polygon) -> bool:
    """Even-odd ray casting across all rings, so holes flip containment."""
    _check_polygon(poly)
    return _pip(*_xy(p), poly.rings)


def _pip(x: float, y: float, rings) -> bool:
    inside = False
    for ring in rings:
        parity = _ring_parity(x, y, ring)
        if parity is None:
            return True
        inside ^= parity
    return inside


# --- area ------------------------------------------------------------------


def ring_signed_area(ring: Sequence[Vertex]) -> float:
    s = 0.0
    for (ax, ay), (bx, by) in zip(ring, ring[1:]):
        s += ax * by - bx * ay
    return s / 2.0


def hole_flags(poly: Polygon) -> list[bool]:
    """True for rings nested inside an odd number of the polygon's other rings."""
    flags = []
    for i, ring in enumerate(poly.rings):
        depth = 0
        for j, other in enumerate(poly.rings):
            if i == j:
                continue
            for x, y in ring[:-1]:
                parity = _ring_parity(x, y, other)
                if parity is not None:
                    depth += parity
                    break
        flags.append(depth % 2 == 1)
    return flags


def polygon_area(poly: Polygon) -> float:
    _check_polygon(poly)
    total = 0.0
    for ring, is_hole in zip(poly.rings, hole_flags(poly)):
        a = abs(ring_signed_area(ring))
        total += -a if is_hole else a
    return total


# --- grid index ------------------------------------------------------------


class GridIndex:
    """Uniform grid over feature bounding boxes; roughly one cell per feature."""

    def __init__(self, boxes: Sequence[BoundingBox | None]):
        self.boxes = list(boxes)
        real = [b for b in self.boxes if b is not None]
        self.cells: dict[tuple[int, int], list[int]] = {}
        if not real:
            self.extent = None
            return
        self.extent = BoundingBox(
            min(b.min_x for b in real),
            min(b.min_y for b in real),
            max(b.max_x for b in real),
            max(b.max_y for b in real),
        )
        side = max(1, int(math.ceil(math.sqrt(len(real)))))
        self.nx = self.ny = side
        self.dx = self.extent.width / side or 1.0
        self.dy = self.extent.height / side or 1.0
        for idx, b in enumerate(self.boxes):
            if b is None:
                continue
            c0, r0 = self._cell(b.min_x, b.min_y)
            c1, r1 = self._cell(b.max_x, b.max_y)
            for c in range(c0, c1 + 1):
                for r in range(r0, r1 + 1):
                    self.cells.setdefault((c, r), []).append(idx)

    def _cell(self, x: float, y: float) -> tuple[int, int]:
        c = int((x - self.extent.min_x) // self.dx)
        r = int((y - self.extent.min_y) // self.dy)
        return min(max(c, 0), self.nx - 1), min(max(r, 0), self.ny - 1)

    def candidates(self, x: float, y: float) -> list[int]:
        """Feature indices (ascending) whose box contains (x, y)."""
        if self.extent is None or not self.extent.contains_point(x, y):
            return []
        return [i for i in self.cells.get(self._cell(x, y), ()) if self.boxes[i].contains_point(x, y)]


def _geom_bbox(geom) -> BoundingBox | None:
    if geom is None:
        return None
    return BoundingBox.of_vertices(geom.vertices())


# --- spatial join ----------------------------------------------------------


def _require_same_crs(*crss: Crs) -> None:
    codes = {c.epsg_code for c in crss}
    if len(codes) > 1:
        raise CrsMismatch(f"layers use different CRS codes {sorted(codes)}")


def spatial_join(
    points: VectorLayer,
    polygons: VectorLayer,
    carry: Sequence[str] | None = None,
) -> VectorLayer:
    """Tag each point with attributes of the first polygon (layer order) containing it.

    ``carry=None`` carries every polygon attribute. Points outside all polygons get nulls.
    """
    if points.geometry_kind != "point":
        raise BadRequest(f"join needs a point layer, got {points.geometry_kind}")
    if polygons.geometry_kind != "polygon":
        raise BadRequest(f"join needs a polygon layer, got {polygons.geometry_kind}")
    _require_same_crs(points.crs, polygons.crs)
    available = polygons.field_names()
    columns = list(available) if carry is None else list(carry)
    missing = [c for c in columns if c not in available]
    if missing:
        raise UnknownAttribute(f"polygon layer lacks {missing}")

    index = GridIndex([_geom_bbox(f.geometry) for f in polygons.features])
    out = []
    for feat in points.features:
        hit = None
        if feat.geometry is not None:
            x, y = feat.geometry.x, feat.geometry.y
            for i in index.candidates(x, y):
                if _pip(x, y, polygons.features[i].geometry.rings):
                    hit = polygons.features[i]
                    break
        attrs = dict(feat.attributes)
        for c in columns:
            attrs[c] = hit.attributes.get(c) if hit is not None else None
        out.append(FeatureRecord(feat.geometry, attrs))
    return VectorLayer(points.name, "point", points.crs, out, points.bbox)


# --- clipping --------------------------------------------------------------


def _dedupe(vertices: list[Vertex]) -> list[Vertex]:
    out: list[Vertex] = []
    for v in vertices:
        if not out or out[-1] != v:
            out.append(v)
    while len(out) > 1 and out[0] == out[-1]:
        out.pop()
    return out


def convex_region(region: BoundingBox | Polygon) -> list[Vertex]:
    """Canonical clip ring: counter-clockwise, open, starting at its lowest (x, y) vertex."""
    if isinstance(region, BoundingBox):
        if region.width <= 0 or region.height <= 0:
            raise NonConvexRegion("clip box has zero area")
        b = region
        return [(b.min_x, b.min_y), (b.max_x, b.min_y), (b.max_x, b.max_y), (b.min_x, b.max_y)]
    _check_polygon(region)
    if len(region.rings) != 1:
        raise NonConvexRegion("clip region must be a single ring")
    ring = _dedupe(list(region.rings[0]))
    if len(ring) < 3:
        raise NonConvexRegion("clip ring is degenerate")
    if ring_signed_area(ring + [ring[0]]) < 0:
        ring.reverse()
    n = len(ring)
    turning = 0.0
    for i in range(n):
        (ax, ay), (bx, by), (cx, cy) = ring[i - 1], ring[i], ring[(i + 1) % n]
        cross = (bx - ax) * (cy - by) - (by - ay) * (cx - bx)
        if cross < 0:
            raise NonConvexRegion("clip ring turns clockwise somewhere")
        turning += math.atan2(cross, (bx - ax) * (cx - bx) + (by - ay) * (cy - by))
    if ring_signed_area(ring + [ring[0]]) <= 0 or abs(turning - 2 * math.pi) > 1e-6:
        raise NonConvexRegion("clip ring is degenerate or self-intersecting")
    start = ring.index(min(ring))
    return ring[start:] + ring[:start]


def _side(a: Vertex, b: Vertex, p: Vertex) -> float:
    return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])


def _cut(a: Vertex, b: Vertex, s: Vertex, e: Vertex, ds: float, de: float) -> Vertex:
    t = ds / (ds - de)
    x = s[0] + t * (e[0] - s[0])
    y = s[1] + t * (e[1] - s[1])
    # axis-aligned clip edges give exact coordinates on that axis
    if a[0] == b[0]:
        x = a[0]
    if a[1] == b[1]:
        y = a[1]
    return (x, y)


def sutherland_hodgman(subject: Sequence[Vertex], region: Sequence[Vertex]) -> list[Vertex]:
    """Clip an open vertex ring against a CCW convex open ring."""
    output = list(subject)
    n = len(region)
    for i in range(n):
        if not output:
            break
        a, b = region[i], region[(i + 1) % n]
        inp, output = output, []
        s = inp[-1]
        ds = _side(a, b, s)
        for e in inp:
            de = _side(a, b, e)
            if de >= 0:
                if ds < 0:
                    output.append(_cut(a, b, s, e, ds, de))
                output.append(e)
            elif ds >= 0:
                if ds > 0:
                    output.append(_cut(a, b, s, e, ds, de))
            s, ds = e, de
    return output


def _clip_segment(p: Vertex, q: Vertex, region: Sequence[Vertex]) -> tuple[Vertex, Vertex] | None:
    t0, t1 = 0.0, 1.0
    n = len(region)
    for i in range(n):
        a, b = region[i], region[(i + 1) % n]
        dp = _side(a, b, p)
        dq = _side(a, b, q)
        if dp < 0 and dq < 0:
            return None
        if dp >= 0 and dq >= 0:
            continue
        t = dp / (dp - dq)
        if dp < 0:
            t0 = max(t0, t)
        else:
            t1 = min(t1, t)
        if t0 > t1:
            return None

    def at(t: float) -> Vertex:
        if t == 0.0:
            return p
        if t == 1.0:
            return q
        return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))

    return at(t0), at(t1)


def _clamp(v: Vertex, box: BoundingBox) -> Vertex:
    return (min(max(v[0], box.min_x), box.max_x), min(max(v[1], box.min_y), box.max_y))


def clip_polygon(poly: Polygon, ring_region: Sequence[Vertex]) -> Polygon | None:
    box = BoundingBox.of_vertices(ring_region)
    rings = []
    for ring in poly.rings:
        out = _dedupe([_clamp(v, box) for v in sutherland_hodgman(_dedupe(list(ring)), ring_region)])
        if len(out) >= 3 and ring_signed_area(out + [out[0]]) != 0:
            rings.append(out + [out[0]])
    return Polygon(rings) if rings else None


def clip_polyline(line: PolyLine, ring_region: Sequence[Vertex]) -> PolyLine | None:
    box = BoundingBox.of_vertices(ring_region)
    parts: list[list[Vertex]] = []
    for part in line.parts:
        current: list[Vertex] = []
        for p, q in zip(part, part[1:]):
            piece = _clip_segment(p, q, ring_region)
            if piece is None or piece[0] == piece[1]:
                if current:
                    parts.append(current)
                    current = []
                continue
            a, b = _clamp(piece[0], box), _clamp(piece[1], box)
            if current and current[-1] == a:
                current.append(b)
            else:
                if current:
                    parts.append(current)
                current = [a, b]
        if current:
            parts.append(current)
    parts = [p for p in parts if len(p) >= 2]
    return PolyLine(parts) if parts else None


def clip(
    layer: VectorLayer,
    region: BoundingBox | Polygon,
    *,
    region_crs: Crs | None = None,
) -> VectorLayer:
    """Keep the part of ``layer`` inside a convex ``region``; emptied features are dropped."""
    if region_crs is not None:
        _require_same_crs(layer.crs, region_crs)
    ring = convex_region(region)
    closed = Polygon([ring + [ring[0]]])
    out = []
    for feat in layer.features:
        g = feat.geometry
        if g is None:
            continue
        if isinstance(g, Point):
            clipped = g if _pip(g.x, g.y, closed.rings) else None
        elif isinstance(g, PolyLine):
            clipped = clip_polyline(g, ring)
        else:
            clipped = clip_polygon(g, ring)
        if clipped is not None:
            out.append(FeatureRecord(clipped, dict(feat.attributes)))
    return VectorLayer.from_features(layer.name, layer.geometry_kind, out, layer.crs)


# --- zonal statistics ------------------------------------------------------


@dataclass(frozen=True)
class Stats:
    count: int
    min: float | None
    max: float | None
    mean: float | None
    sum: float

    def to_dict(self) -> dict:
        return {"count": self.count, "min": self.min, "max": self.max, "mean": self.mean, "sum": self.sum}


def zonal_stats(
    raster: RasterGrid,
    zone: Polygon | Sequence[Polygon],
    *,
    zone_crs: Crs | None = None,
) -> Stats:
    """Statistics of non-nodata cells whose centers fall inside ``zone``.

    A sequence of polygons is treated as their union. ``sum`` is correctly rounded
    (``math.fsum``), so it does not depend on scan order.
    """
    polys = [zone] if isinstance(zone, Polygon) else list(zone)
    for p in polys:
        _check_polygon(p)
    if zone_crs is not None:
        _require_same_crs(raster.crs, zone_crs)
    if not polys:
        raise DisjointExtent("empty zone")
    zbox = BoundingBox.of_vertices(v for p in polys for v in p.vertices())
    if not zbox.intersects(raster.bbox):
        raise DisjointExtent(f"zone {zbox.as_tuple()} misses raster {raster.bbox.as_tuple()}")

    cs = raster.cell_size
    # one-cell padding absorbs rounding at the window edges; PIP decides membership
    c0 = max(0, math.floor((zbox.min_x - raster.origin_x) / cs - 0.5) - 1)
    c1 = min(raster.n_cols - 1, math.ceil((zbox.max_x - raster.origin_x) / cs - 0.5) + 1)
    r0 = max(0, math.floor((zbox.min_y - raster.origin_y) / cs - 0.5) - 1)
    r1 = min(raster.n_rows - 1, math.ceil((zbox.max_y - raster.origin_y) / cs - 0.5) + 1)

    grid = raster.grid()
    nodata = np.float32(raster.nodata_value)
    values = []
    for r in range(r0, r1 + 1):
        y = raster.origin_y + (r + 0.5) * cs
        for c in range(c0, c1 + 1):
            v = grid[r, c]
            if v == nodata:
                continue
            x = raster.origin_x + (c + 0.5) * cs
            if any(_pip(x, y, p.rings) for p in polys):
                values.append(float(v))
    if not values:
        return Stats(0, None, None, None, 0.0)
    total = math.fsum(values)
    return Stats(len(values), min(values), max(values), total / len(values), total)


# --- rendering -------------------------------------------------------------


class _Canvas:
    def __init__(self, extent: BoundingBox, width: int, height: int):
        self.extent = extent
        self.w, self.h = width, height
        self.px = np.full((height, width, 3), 255, dtype=np.uint8)

    def to_pixel(self, x: float, y: float) -> tuple[float, float]:
        e = self.extent
        return (x - e.min_x) / e.width * self.w, (e.max_y - y) / e.height * self.h

    def put(self, c: int, r: int, color) -> None:
        if 0 <= c < self.w and 0 <= r < self.h:
            self.px[r, c] = color

    def point(self, x: float, y: float, color) -> None:
        fx, fy = self.to_pixel(x, y)
        if not (-2 <= fx <= self.w + 2 and -2 <= fy <= self.h + 2):
            return
        c = self.w - 1 if fx == self.w else math.floor(fx)
        r = self.h - 1 if fy == self.h else math.floor(fy)
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                self.put(c + dc, r + dr, color)

    def line(self, p: Vertex, q: Vertex, color) -> None:
        a = self.to_pixel(*p)
        b = self.to_pixel(*q)
        pad = [(-1.0, -1.0), (self.w + 1.0, -1.0), (self.w + 1.0, self.h + 1.0), (-1.0, self.h + 1.0)]
        seg = _clip_segment(a, b, pad)
        if seg is None:
            return
        (x0, y0), (x1, y1) = seg
        c0, r0, c1, r1 = math.floor(x0), math.floor(y0), math.floor(x1), math.floor(y1)
        dc, dr = abs(c1 - c0), -abs(r1 - r0)
        sc = 1 if c0 < c1 else -1
        sr = 1 if r0 < r1 else -1
        err = dc + dr
        while True:
            self.put(c0, r0, color)
            if c0 == c1 and r0 == r1:
                break
            e2 = 2 * err
            if e2 >= dr:
                err += dr
                c0 += sc
            if e2 <= dc:
                err += dc
                r0 += sr

    def raster(self, grid: RasterGrid) -> None:
        e = self.extent
        cols = np.arange(self.w, dtype=np.float64)
        rows = np.arange(self.h, dtype=np.float64)
        xs = e.min_x + (cols + 0.5) * (e.width / self.w)
        ys = e.max_y - (rows + 0.5) * (e.height / self.h)
        gc = np.floor((xs - grid.origin_x) / grid.cell_size).astype(np.int64)
        gr = np.floor((ys - grid.origin_y) / grid.cell_size).astype(np.int64)
        okc = (gc >= 0) & (gc < grid.n_cols)
        okr = (gr >= 0) & (gr < grid.n_rows)
        g = grid.grid()
        valid = ~grid.nodata_mask()
        if not valid.any():
            return
        lo = float(grid.cells[valid].min())
        hi = float(grid.cells[valid].max())
        sub = g[np.clip(gr, 0, grid.n_rows - 1)][:, np.clip(gc, 0, grid.n_cols - 1)].astype(np.float64)
        inside = okr[:, None] & okc[None, :] & (sub != np.float32(grid.nodata_value))
        if hi > lo:
            gray = np.rint((sub - lo) / (hi - lo) * 255.0)
        else:
            gray = np.full(sub.shape, 128.0)
        gray = np.clip(gray, 0, 255).astype(np.uint8)
        for ch in range(3):
            self.px[:, :, ch] = np.where(inside, gray, self.px[:, :, ch])

    def to_ppm(self) -> bytes:
        return f"P6\n{self.w} {self.h}\n255\n".encode("ascii") + self.px.tobytes()


def render_composite(
    extent: BoundingBox,
    width: int,
    height: int,
    layers: Sequence[VectorLayer] = (),
    raster: RasterGrid | None = None,
) -> bytes:
    """Draw ``raster`` as stretched grayscale, then each vector layer on top in order.

    Polygons are outlined, polylines stroked and points drawn as 3x3 squares, each
    layer in its own palette color (first layer black).
    """
    if not (1 <= width <= MAX_RENDER_PX and 1 <= height <= MAX_RENDER_PX):
        raise BadRequest(f"image size {width}x{height} outside [1, {MAX_RENDER_PX}]")
    if extent.width <= 0 or extent.height <= 0:
        raise EmptyExtent(f"extent {extent.as_tuple()} has zero area")
    crss = [l.crs for l in layers] + ([raster.crs] if raster is not None else [])
    _require_same_crs(*crss)
    canvas = _Canvas(extent, width, height)
    if raster is not None:
        canvas.raster(raster)
    for i, layer in enumerate(layers):
        color = PALETTE[i % len(PALETTE)]
        for feat in layer.features:
            g = feat.geometry
            if isinstance(g, Point):
                canvas.point(g.x, g.y, color)
            elif g is not None:
                for seq in g.parts if isinstance(g, PolyLine) else g.rings:
                    if len(seq) == 1:
                        canvas.point(*seq[0], color)
                    for p, q in zip(seq, seq[1:]):
                        canvas.line(p, q, color)
    return canvas.to_ppm()


# --- requests and results --------------------------------------------------


@dataclass(frozen=True)
class SpatialJoinOp:
    points: str
    polygons: str
    carry: tuple[str, ...] | None = None


@dataclass(frozen=True)
class ClipOp:
    target: str
    region: BoundingBox | Polygon


@dataclass(frozen=True)
class ZonalStatsOp:
    raster: str
    polygons: str
    feature: int | None = None  # None: union of all polygon features


@dataclass(frozen=True)
class RenderOp:
    extent: BoundingBox
    width_px: int
    height_px: int


Operation = Union[SpatialJoinOp, ClipOp, ZonalStatsOp, RenderOp]


@dataclass(frozen=True)
class OverlayRequest:
    operation: Operation
    layers: tuple[str, ...] = ()  # bottom-to-top stack; Render draws these

    def references(self) -> list[str]:
        op = self.operation
        refs = list(self.layers)
        if isinstance(op, SpatialJoinOp):
            refs += [op.points, op.polygons]
        elif isinstance(op, ClipOp):
            refs.append(op.target)
        elif isinstance(op, ZonalStatsOp):
            refs += [op.raster, op.polygons]
        return list(dict.fromkeys(refs))

    @classmethod
    def from_json(cls, doc: dict) -> OverlayRequest:
        try:
            op = doc["operation"]
            kind = op["type"].lower()
            layers = tuple(doc.get("layers", ()))
            if kind in ("spatial_join", "spatialjoin", "join"):
                carry = op.get("carry")
                return cls(SpatialJoinOp(op["points"], op["polygons"], tuple(carry) if carry is not None else None), layers)
            if kind == "clip":
                return cls(ClipOp(op["target"], _region_from_json(op["region"])), layers)
            if kind in ("zonal_stats", "zonalstats", "zonal"):
                return cls(ZonalStatsOp(op["raster"], op["polygons"], op.get("feature")), layers)
            if kind == "render":
                w, h = int(op["width_px"]), int(op["height_px"])
                if not (1 <= w <= MAX_RENDER_PX and 1 <= h <= MAX_RENDER_PX):
                    raise BadRequest(f"render size {w}x{h} outside [1, {MAX_RENDER_PX}]")
                return cls(RenderOp(BoundingBox(*op["extent"]), w, h), layers)
        except (KeyError, TypeError, ValueError) as exc:
            raise BadRequest(f"malformed overlay request: {exc!r}") from exc
        raise BadRequest(f"unknown operation type {kind!r}")

    def to_json(self) -> dict:
        op = self.operation
        if isinstance(op, SpatialJoinOp):
            body = {"type": "spatial_join", "points": op.points, "polygons": op.polygons}
            if op.carry is not None:
                body["carry"] = list(op.carry)
        elif isinstance(op, ClipOp):
            body = {"type": "clip", "target": op.target, "region": _region_to_json(op.region)}
        elif isinstance(op, ZonalStatsOp):
            body = {"type": "zonal_stats", "raster": op.raster, "polygons": op.polygons}
            if op.feature is not None:
                body["feature"] = op.feature
        else:
            body = {"type": "render", "extent": list(op.extent.as_tuple()),
                    "width_px": op.width_px, "height_px": op.height_px}
        return {"layers": list(self.layers), "operation": body}


def _region_from_json(doc) -> BoundingBox | Polygon:
    if "bbox" in doc:
        return BoundingBox(*doc["bbox"])
    ring = [tuple(v) for v in doc["polygon"]]
    if ring and ring[0] != ring[-1]:
        ring.append(ring[0])
    return Polygon([ring])


def _region_to_json(region) -> dict:
    if isinstance(region, BoundingBox):
        return {"bbox": list(region.as_tuple())}
    return {"polygon": [list(v) for v in region.rings[0]]}


@dataclass(frozen=True)
class LayerResult:
    kind: str  # "joined" | "clipped"
    layer: VectorLayer


@dataclass(frozen=True)
class StatsResult:
    stats: Stats


@dataclass(frozen=True)
class ImageResult:
    data: bytes
    media_type: str = "image/x-portable-pixmap"


OverlayResult = Union[LayerResult, StatsResult, ImageResult]

Resolver = Callable[[str], Union[VectorLayer, RasterGrid]]


def _vector(resolve: Resolver, ref: str) -> VectorLayer:
    obj = resolve(ref)
    if not isinstance(obj, VectorLayer):
        raise BadRequest(f"{ref!r} is not a vector layer")
    return obj


def run_overlay(request: OverlayRequest, resolve: Resolver) -> OverlayResult:
    """Resolve every referenced layer, check they share a CRS, and run the operation."""
    resolved = {ref: resolve(ref) for ref in request.references()}
    _require_same_crs(*(obj.crs for obj in resolved.values()))
    get = resolved.__getitem__
    op = request.operation
    if isinstance(op, SpatialJoinOp):
        joined = spatial_join(_vector(get, op.points), _vector(get, op.polygons), op.carry)
        return LayerResult("joined", joined)
    if isinstance(op, ClipOp):
        return LayerResult("clipped", clip(_vector(get, op.target), op.region))
    if isinstance(op, ZonalStatsOp):
        raster = get(op.raster)
        if not isinstance(raster, RasterGrid):
            raise BadRequest(f"{op.raster!r} is not a raster")
        zones = _vector(get, op.polygons)
        if zones.geometry_kind != "polygon":
            raise BadRequest(f"{op.polygons!r} is not a polygon layer")
        polys = [f.geometry for f in zones.features if f.geometry is not None]
        if op.feature is not None:
            if not 0 <= op.feature < len(zones.features) or zones.features[op.feature].geometry is None:
                raise BadRequest(f"no polygon feature {op.feature} in {op.polygons!r}")
            polys = [zones.features[op.feature].geometry]
        return StatsResult(zonal_stats(raster, polys))
    rasters = [get(r) for r in request.layers if isinstance(get(r), RasterGrid)]
    vectors = [get(r) for r in request.layers if isinstance(get(r), VectorLayer)]
    if len(rasters) > 1:
        raise BadRequest("render draws at most one raster")
    data = render_composite(op.extent, op.width_px, op.height_px, vectors, rasters[0] if rasters else None)
    return ImageResult(data)


def geometry_to_json(g) -> dict | None:
    if g is None:
        return None
    if isinstance(g, Point):
        return {"type": "Point", "coordinates": [g.x, g.y]}
    if isinstance(g, PolyLine):
        return {"type": "PolyLine", "coordinates": [[list(v) for v in p] for p in g.parts]}
    return {"type": "Polygon", "coordinates": [[list(v) for v in r] for r in g.rings]}


def geometry_from_json(doc: dict | None):
    if doc is None:
        return None
    kind = doc["type"]
    if kind == "Point":
        return Point(*doc["coordinates"])
    if kind == "PolyLine":
        return PolyLine(doc["coordinates"])
    if kind == "Polygon":
        return Polygon(doc["coordinates"])
    raise BadRequest(f"unknown geometry type {kind!r}")


def layer_to_json(layer: VectorLayer) -> dict:
    return {
        "name": layer.name,
        "geometry_kind": layer.geometry_kind,
        "crs": layer.crs.epsg_code,
        "bbox": list(layer.bbox.as_tuple()),
        "features": [
            {"geometry": geometry_to_json(f.geometry), "attributes": dict(f.attributes)}
            for f in layer.features
        ],
    }


def layer_from_json(doc: dict) -> VectorLayer:
    feats = [FeatureRecord(geometry_from_json(f["geometry"]), dict(f["attributes"])) for f in doc["features"]]
    return VectorLayer.from_features(doc["name"], doc["geometry_kind"], feats, Crs(doc.get("crs", 0)))


def result_to_json(result: OverlayResult) -> dict:
    if isinstance(result, LayerResult):
        return {"type": result.kind, "layer": layer_to_json(result.layer)}
    if isinstance(result, StatsResult):
        return {"type": "stats", **result.stats.to_dict()}
    raise TypeError("image results are returned as raw PPM bytes")
