"""Geospatial payloads accepted at the edge: ESRI shapefile (.shp/.dbf) and ESRI ASCII grid.

Only the 2D shape types Point (1), PolyLine (3) and Polygon (5) plus null shapes are
supported. Coordinates are kept exactly as decoded; there is no reprojection.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

FILE_CODE = 9994
SHP_VERSION = 1000
HEADER_LEN = 100

NULL_SHAPE = 0
POINT = 1
POLYLINE = 3
POLYGON = 5

KIND_BY_TYPE = {NULL_SHAPE: "null", POINT: "point", POLYLINE: "polyline", POLYGON: "polygon"}
TYPE_BY_KIND = {v: k for k, v in KIND_BY_TYPE.items()}

DBF_MAX_FIELD_NAME = 10
DEFAULT_NODATA = -9999.0

Vertex = tuple[float, float]
AttrValue = Union[str, float, int, None]


class GeodataError(Exception):
    """Base for every parse/serialize failure in this module."""


class ShapefileError(GeodataError):
    pass


class BadMagic(ShapefileError):
    pass


class UnsupportedShapeType(ShapefileError):
    pass


class TruncatedRecord(ShapefileError):
    pass


class MalformedRecord(ShapefileError):
    """Record fits its declared length but its contents are inconsistent."""


class DbfMismatch(ShapefileError):
    """Any DBF problem: record count disagreement, unsupported field type, bad header."""


class UnrepresentableAttribute(ShapefileError):
    pass


class EmptyLayer(GeodataError):
    pass


class GridError(GeodataError):
    pass


class HeaderMissingKey(GridError):
    pass


class CellCountMismatch(GridError):
    pass


class NonNumericCell(GridError):
    pass


# --- domain types ---------------------------------------------------------


@dataclass(frozen=True)
class Crs:
    epsg_code: int = 0  # 0 means "unknown / not tagged"

    def __post_init__(self):
        if not isinstance(self.epsg_code, int) or self.epsg_code < 0:
            raise ValueError(f"invalid EPSG code {self.epsg_code!r}")

    @property
    def known(self) -> bool:
        return self.epsg_code > 0


UNKNOWN_CRS = Crs(0)


@dataclass(frozen=True)
class BoundingBox:
    min_x: float
    min_y: float
    max_x: float
    max_y: float

    def __post_init__(self):
        vals = (self.min_x, self.min_y, self.max_x, self.max_y)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite bounding box {vals}")
        if self.min_x > self.max_x or self.min_y > self.max_y:
            raise ValueError(f"inverted bounding box {vals}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.min_x, self.min_y, self.max_x, self.max_y)

    def contains_point(self, x: float, y: float) -> bool:
        return self.min_x <= x <= self.max_x and self.min_y <= y <= self.max_y

    def contains(self, other: BoundingBox) -> bool:
        return (
            self.min_x <= other.min_x
            and self.min_y <= other.min_y
            and other.max_x <= self.max_x
            and other.max_y <= self.max_y
        )

    def intersects(self, other: BoundingBox) -> bool:
        return not (
            other.min_x > self.max_x
            or other.max_x < self.min_x
            or other.min_y > self.max_y
            or other.max_y < self.min_y
        )

    @property
    def width(self) -> float:
        return self.max_x - self.min_x

    @property
    def height(self) -> float:
        return self.max_y - self.min_y

    @classmethod
    def of_vertices(cls, vertices: Iterable[Vertex]) -> BoundingBox:
        xs, ys = [], []
        for x, y in vertices:
            xs.append(x)
            ys.append(y)
        if not xs:
            raise EmptyLayer("no vertices")
        return cls(min(xs), min(ys), max(xs), max(ys))


def _freeze(seqs) -> tuple:
    return tuple(tuple((float(x), float(y)) for x, y in seq) for seq in seqs)


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    kind = "point"

    def vertices(self) -> Iterable[Vertex]:
        yield (self.x, self.y)


@dataclass(frozen=True)
class PolyLine:
    parts: tuple[tuple[Vertex, ...], ...]

    kind = "polyline"

    def __post_init__(self):
        object.__setattr__(self, "parts", _freeze(self.parts))

    def vertices(self) -> Iterable[Vertex]:
        for part in self.parts:
            yield from part


@dataclass(frozen=True)
class Polygon:
    """Polygon as a list of rings; any ring nested inside an odd number of others is a hole."""

    rings: tuple[tuple[Vertex, ...], ...]

    kind = "polygon"

    def __post_init__(self):
        object.__setattr__(self, "rings", _freeze(self.rings))

    def vertices(self) -> Iterable[Vertex]:
        for ring in self.rings:
            yield from ring


Geometry = Union[Point, PolyLine, Polygon]


@dataclass(frozen=True)
class FeatureRecord:
    geometry: Geometry | None
    attributes: dict[str, AttrValue] = field(default_factory=dict)

    def __hash__(self):
        return hash((self.geometry, tuple(self.attributes.items())))


@dataclass(frozen=True)
class VectorLayer:
    name: str
    geometry_kind: str
    crs: Crs
    features: tuple[FeatureRecord, ...]
    bbox: BoundingBox
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        if self.geometry_kind not in TYPE_BY_KIND:
            raise ValueError(f"unknown geometry kind {self.geometry_kind!r}")
        object.__setattr__(self, "features", tuple(self.features))
        object.__setattr__(self, "warnings", tuple(self.warnings))

    @classmethod
    def from_features(
        cls,
        name: str,
        geometry_kind: str,
        features: Iterable[FeatureRecord],
        crs: Crs = UNKNOWN_CRS,
    ) -> VectorLayer:
        features = tuple(features)
        return cls(name, geometry_kind, crs, features, _bbox_or_zero(features))

    def field_names(self) -> list[str]:
        names: dict[str, None] = {}
        for feat in self.features:
            for key in feat.attributes:
                names.setdefault(key, None)
        return list(names)

    def __len__(self):
        return len(self.features)


@dataclass(frozen=True, eq=False)
class RasterGrid:
    """Regular grid; ``cells`` is row-major with row 0 at the *bottom* (lowest y)."""

    n_cols: int
    n_rows: int
    origin_x: float
    origin_y: float
    cell_size: float
    nodata_value: float
    cells: np.ndarray
    crs: Crs = UNKNOWN_CRS

    def __post_init__(self):
        if self.n_cols <= 0 or self.n_rows <= 0:
            raise GridError("grid dimensions must be positive")
        if not (self.cell_size > 0 and math.isfinite(self.cell_size)):
            raise GridError(f"cell size must be positive, got {self.cell_size}")
        cells = np.asarray(self.cells, dtype=np.float32).reshape(-1)
        if cells.size != self.n_cols * self.n_rows:
            raise CellCountMismatch(
                f"expected {self.n_cols * self.n_rows} cells, got {cells.size}"
            )
        cells = cells.copy()
        cells.flags.writeable = False
        object.__setattr__(self, "cells", cells)

    @property
    def bbox(self) -> BoundingBox:
        return BoundingBox(
            self.origin_x,
            self.origin_y,
            self.origin_x + self.n_cols * self.cell_size,
            self.origin_y + self.n_rows * self.cell_size,
        )

    def grid(self) -> np.ndarray:
        return self.cells.reshape(self.n_rows, self.n_cols)

    def nodata_mask(self) -> np.ndarray:
        return self.cells == np.float32(self.nodata_value)

    def cell_center(self, row: int, col: int) -> Vertex:
        return (
            self.origin_x + (col + 0.5) * self.cell_size,
            self.origin_y + (row + 0.5) * self.cell_size,
        )

    def value_at(self, x: float, y: float) -> float | None:
        """Cell value under (x, y), or None outside the grid or on nodata."""
        col = math.floor((x - self.origin_x) / self.cell_size)
        row = math.floor((y - self.origin_y) / self.cell_size)
        if not (0 <= col < self.n_cols and 0 <= row < self.n_rows):
            return None
        v = self.cells[row * self.n_cols + col]
        if v == np.float32(self.nodata_value):
            return None
        return float(v)


# --- bbox & validation ----------------------------------------------------


def _iter_vertices(features: Iterable[FeatureRecord]) -> Iterable[Vertex]:
    for feat in features:
        if feat.geometry is not None:
            yield from feat.geometry.vertices()


def _bbox_or_zero(features: Sequence[FeatureRecord]) -> BoundingBox:
    try:
        return BoundingBox.of_vertices(_iter_vertices(features))
    except (EmptyLayer, ValueError):
        return BoundingBox(0.0, 0.0, 0.0, 0.0)


def compute_bbox(layer: VectorLayer) -> BoundingBox:
    """Tight axis-aligned hull of every vertex in ``layer``."""
    if not layer.features:
        raise EmptyLayer(f"layer {layer.name!r} has no features")
    return BoundingBox.of_vertices(_iter_vertices(layer.features))


@dataclass(frozen=True)
class Violation:
    index: int | None  # feature index, None for layer-level rules
    rule: str
    detail: str = ""

    def __str__(self):
        where = "layer" if self.index is None else str(self.index)
        return f"{self.rule}@{where}"


def validate_layer(layer: VectorLayer) -> list[Violation]:
    out: list[Violation] = []
    expected = layer.geometry_kind
    for i, feat in enumerate(layer.features):
        geom = feat.geometry
        if geom is not None:
            if geom.kind != expected:
                out.append(Violation(i, "GeometryKindMismatch", f"{geom.kind} in {expected} layer"))
            if not all(math.isfinite(c) for v in geom.vertices() for c in v):
                out.append(Violation(i, "NonFiniteCoordinate"))
            if isinstance(geom, Polygon):
                if not geom.rings:
                    out.append(Violation(i, "EmptyGeometry"))
                for ring in geom.rings:
                    if len(ring) < 4:
                        out.append(Violation(i, "RingTooShort", f"{len(ring)} vertices"))
                    elif ring[0] != ring[-1]:
                        out.append(Violation(i, "RingNotClosed"))
            elif isinstance(geom, PolyLine):
                if not geom.parts:
                    out.append(Violation(i, "EmptyGeometry"))
                for part in geom.parts:
                    if len(part) < 2:
                        out.append(Violation(i, "PartTooShort", f"{len(part)} vertices"))
        for name in feat.attributes:
            if not isinstance(name, str) or not name:
                out.append(Violation(i, "BadFieldName", repr(name)))
                continue
            try:
                encoded = name.encode("ascii")
            except UnicodeEncodeError:
                out.append(Violation(i, "BadFieldName", f"{name!r} is not ASCII"))
                continue
            if len(encoded) > DBF_MAX_FIELD_NAME or b"\x00" in encoded:
                out.append(Violation(i, "BadFieldName", f"{name!r} longer than 10 bytes"))
    if layer.features and not any(v.rule == "NonFiniteCoordinate" for v in out):
        try:
            tight = compute_bbox(layer)
        except EmptyLayer:
            tight = None
        if tight is not None and not layer.bbox.contains(tight):
            out.append(Violation(None, "BboxMismatch", f"{layer.bbox} does not contain {tight}"))
    return out


# --- shapefile reading ----------------------------------------------------


def parse_shapefile(
    shp_bytes: bytes,
    dbf_bytes: bytes | None = None,
    *,
    name: str = "layer",
    crs: Crs | None = None,
) -> VectorLayer:
    data = bytes(shp_bytes)
    if len(data) < HEADER_LEN:
        raise TruncatedRecord(f"shapefile header needs {HEADER_LEN} bytes, got {len(data)}")
    file_code, file_words = struct.unpack_from(">i20xi", data, 0)
    if file_code != FILE_CODE:
        raise BadMagic(f"file code {file_code} != {FILE_CODE}")
    _version, shape_type = struct.unpack_from("<2i", data, 28)
    if shape_type not in KIND_BY_TYPE:
        raise UnsupportedShapeType(f"shape type {shape_type}")
    header_box = struct.unpack_from("<4d", data, 36)

    end = file_words * 2
    if end < HEADER_LEN or end > len(data):
        raise TruncatedRecord(f"declared file length {end} bytes, have {len(data)}")

    geoms: list[Geometry | None] = []
    offset = HEADER_LEN
    while offset < end:
        if end - offset < 8:
            raise TruncatedRecord(f"record header at {offset} cut short")
        _recno, content_words = struct.unpack_from(">2i", data, offset)
        nbytes = content_words * 2
        start = offset + 8
        if content_words < 2 or start + nbytes > end:
            raise TruncatedRecord(f"record at {offset} declares {nbytes} bytes")
        geoms.append(_decode_shape(data, start, nbytes, shape_type))
        offset = start + nbytes

    warnings: list[str] = []
    if dbf_bytes is None:
        rows: list[dict[str, AttrValue]] = [{} for _ in geoms]
        warnings.append("no DBF supplied; features carry no attributes")
    else:
        rows = parse_dbf(dbf_bytes)
        if len(rows) != len(geoms):
            raise DbfMismatch(f"DBF has {len(rows)} records, SHP has {len(geoms)}")

    features = tuple(FeatureRecord(g, r) for g, r in zip(geoms, rows))
    kind = KIND_BY_TYPE[shape_type]
    bbox = _bbox_or_zero(features)
    if any(f.geometry is not None for f in features):
        try:
            hb = BoundingBox(*header_box)
        except ValueError:
            hb = None
        if hb is None or not hb.contains(bbox):
            warnings.append(f"header bbox {header_box} does not contain features {bbox.as_tuple()}")
    else:
        try:
            bbox = BoundingBox(*header_box)
        except ValueError:
            pass
    return VectorLayer(name, kind, crs or UNKNOWN_CRS, features, bbox, tuple(warnings))


def _decode_shape(data: bytes, start: int, nbytes: int, layer_type: int) -> Geometry | None:
    (stype,) = struct.unpack_from("<i", data, start)
    if stype == NULL_SHAPE:
        return None
    if stype not in (POINT, POLYLINE, POLYGON):
        raise UnsupportedShapeType(f"shape type {stype}")
    if stype != layer_type:
        raise UnsupportedShapeType(f"record of type {stype} in a type-{layer_type} file")
    if stype == POINT:
        if nbytes < 20:
            raise TruncatedRecord("point record shorter than 20 bytes")
        x, y = struct.unpack_from("<2d", data, start + 4)
        return Point(x, y)
    if nbytes < 44:
        raise TruncatedRecord("poly record shorter than 44 bytes")
    n_parts, n_points = struct.unpack_from("<2i", data, start + 36)
    if n_parts < 0 or n_points < 0 or 44 + 4 * n_parts + 16 * n_points > nbytes:
        raise TruncatedRecord(f"{n_parts} parts / {n_points} points overrun record")
    parts = struct.unpack_from(f"<{n_parts}i", data, start + 44)
    coords = struct.unpack_from(f"<{2 * n_points}d", data, start + 44 + 4 * n_parts)
    bounds = list(parts) + [n_points]
    if n_parts and (parts[0] != 0 or any(b < a for a, b in zip(bounds, bounds[1:]))):
        raise MalformedRecord(f"part index table {parts} not monotone over {n_points} points")
    seqs = [
        tuple((coords[2 * k], coords[2 * k + 1]) for k in range(a, b))
        for a, b in zip(bounds, bounds[1:])
    ]
    return PolyLine(seqs) if stype == POLYLINE else Polygon(seqs)


def parse_dbf(dbf_bytes: bytes) -> list[dict[str, AttrValue]]:
    data = bytes(dbf_bytes)
    if len(data) < 33:
        raise DbfMismatch("DBF shorter than its fixed header")
    n_records, header_len, record_len = struct.unpack_from("<IHH", data, 4)
    fields = []
    pos = 32
    while pos < header_len - 1 and data[pos] != 0x0D:
        if pos + 32 > len(data):
            raise DbfMismatch("field descriptor table truncated")
        raw_name = data[pos : pos + 11].split(b"\x00", 1)[0]
        ftype = chr(data[pos + 11])
        flen, fdec = data[pos + 16], data[pos + 17]
        if ftype not in "CNF":
            raise DbfMismatch(f"unsupported DBF field type {ftype!r}")
        try:
            fname = raw_name.decode("ascii")
        except UnicodeDecodeError as exc:
            raise DbfMismatch(f"non-ASCII field name {raw_name!r}") from exc
        fields.append((fname, ftype, flen, fdec))
        pos += 32
    if record_len != 1 + sum(f[2] for f in fields):
        raise DbfMismatch(f"record length {record_len} disagrees with field widths")
    if header_len + n_records * record_len > len(data):
        raise DbfMismatch(f"{n_records} records do not fit in {len(data)} bytes")

    rows = []
    for r in range(n_records):
        off = header_len + r * record_len + 1  # skip deletion flag
        row: dict[str, AttrValue] = {}
        for fname, ftype, flen, fdec in fields:
            raw = data[off : off + flen]
            off += flen
            row[fname] = _decode_dbf_value(raw, ftype, fdec)
        rows.append(row)
    return rows


def _decode_dbf_value(raw: bytes, ftype: str, decimals: int) -> AttrValue:
    if ftype == "C":
        text = raw.rstrip(b" \x00")
        if not text:
            return None
        try:
            return text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DbfMismatch(f"undecodable text {raw!r}") from exc
    text = raw.strip(b" \x00").decode("ascii", errors="replace")
    if not text or set(text) <= {"*", "?"}:
        return None
    try:
        if ftype == "N" and decimals == 0 and not any(c in text for c in ".eE"):
            return int(text)
        return float(text)
    except ValueError as exc:
        raise DbfMismatch(f"bad numeric value {text!r}") from exc


# --- shapefile writing ----------------------------------------------------


def write_shapefile(layer: VectorLayer) -> tuple[bytes, bytes]:
    problems = [v for v in validate_layer(layer) if v.rule != "BboxMismatch"]
    if problems:
        raise ValueError(f"layer fails validation: {', '.join(map(str, problems))}")
    shape_type = TYPE_BY_KIND[layer.geometry_kind]
    records = []
    for i, feat in enumerate(layer.features, start=1):
        content = _encode_shape(feat.geometry)
        records.append(struct.pack(">2i", i, len(content) // 2) + content)
    body = b"".join(records)
    if any(f.geometry is not None for f in layer.features):
        box = compute_bbox(layer).as_tuple()
    else:
        box = layer.bbox.as_tuple()
    header = (
        struct.pack(">7i", FILE_CODE, 0, 0, 0, 0, 0, (HEADER_LEN + len(body)) // 2)
        + struct.pack("<2i", SHP_VERSION, shape_type)
        + struct.pack("<8d", *box, 0.0, 0.0, 0.0, 0.0)
    )
    return header + body, write_dbf(layer)


def _encode_shape(geom: Geometry | None) -> bytes:
    if geom is None:
        return struct.pack("<i", NULL_SHAPE)
    if isinstance(geom, Point):
        return struct.pack("<i2d", POINT, geom.x, geom.y)
    seqs = geom.parts if isinstance(geom, PolyLine) else geom.rings
    stype = POLYLINE if isinstance(geom, PolyLine) else POLYGON
    flat = [c for seq in seqs for v in seq for c in v]
    starts, n = [], 0
    for seq in seqs:
        starts.append(n)
        n += len(seq)
    box = BoundingBox.of_vertices(geom.vertices()).as_tuple()
    return (
        struct.pack("<i4d2i", stype, *box, len(seqs), n)
        + struct.pack(f"<{len(starts)}i", *starts)
        + struct.pack(f"<{len(flat)}d", *flat)
    )


def _column_spec(name: str, values: list[AttrValue]) -> tuple[str, int, int, list[bytes]]:
    present = [v for v in values if v is not None]
    for v in present:
        if isinstance(v, bool) or not isinstance(v, (str, int, float)):
            raise UnrepresentableAttribute(f"{name}: {v!r} has no DBF C/N/F form")
    if any(isinstance(v, str) for v in present):
        if not all(isinstance(v, str) for v in present):
            raise UnrepresentableAttribute(f"{name}: column mixes text and numbers")
        cells = []
        for v in values:
            if v is None:
                cells.append(b"")
                continue
            if v == "" or v != v.rstrip(" ") or "\x00" in v:
                raise UnrepresentableAttribute(
                    f"{name}: {v!r} cannot survive DBF space padding"
                )
            cells.append(v.encode("utf-8"))
        width = max([len(c) for c in cells] + [1])
        if width > 254:
            raise UnrepresentableAttribute(f"{name}: text wider than 254 bytes")
        return "C", width, 0, cells
    if all(isinstance(v, int) for v in present):
        cells = [b"" if v is None else str(v).encode() for v in values]
        ftype, width_cap = "N", 20
    else:
        for v in present:
            if not math.isfinite(v):
                raise UnrepresentableAttribute(f"{name}: non-finite {v!r}")
        cells = [b"" if v is None else repr(float(v)).encode() for v in values]
        ftype, width_cap = "F", 32
    width = max([len(c) for c in cells] + [1])
    if width > width_cap:
        raise UnrepresentableAttribute(f"{name}: value wider than {width_cap} characters")
    # declared decimals only steer other readers into float parsing; values are exact repr text
    dec = 0 if ftype == "N" else min(15, max(1, *(_frac_digits(c) for c in cells)))
    return ftype, width, dec, cells


def _frac_digits(cell: bytes) -> int:
    mantissa = cell.split(b"e")[0]
    return len(mantissa.partition(b".")[2])


def write_dbf(layer: VectorLayer) -> bytes:
    names = layer.field_names()
    columns = [
        _column_spec(n, [f.attributes.get(n) for f in layer.features]) for n in names
    ]
    n_records = len(layer.features)
    header_len = 32 + 32 * len(columns) + 1
    record_len = 1 + sum(c[1] for c in columns)
    # last-update date pinned to 1970-01-01 so output is byte-deterministic
    out = bytearray(struct.pack("<4BIHH20x", 0x03, 70, 1, 1, n_records, header_len, record_len))
    for name, (ftype, width, dec, _) in zip(names, columns):
        out += struct.pack("<11sc4xBB14x", name.encode("ascii"), ftype.encode(), width, dec)
    out += b"\x0d"
    for r in range(n_records):
        out += b" "
        for ftype, width, _dec, cells in columns:
            cell = cells[r]
            out += cell.ljust(width) if ftype == "C" else cell.rjust(width)
    out += b"\x1a"
    return bytes(out)


def write_shx(shp_bytes: bytes) -> bytes:
    """Build the ``.shx`` record index for an already-serialized ``.shp``."""
    entries = []
    offset = HEADER_LEN
    end = struct.unpack_from(">i", shp_bytes, 24)[0] * 2
    while offset < end:
        _recno, words = struct.unpack_from(">2i", shp_bytes, offset)
        entries.append(struct.pack(">2i", offset // 2, words))
        offset += 8 + words * 2
    header = bytearray(shp_bytes[:HEADER_LEN])
    header[24:28] = struct.pack(">i", (HEADER_LEN + 8 * len(entries)) // 2)
    return bytes(header) + b"".join(entries)


def read_shapefile(path: str | Path, crs: Crs | None = None) -> VectorLayer:
    """Load ``<stem>.shp`` and, when present, the sibling ``<stem>.dbf``."""
    shp = Path(path).with_suffix(".shp")
    dbf = shp.with_suffix(".dbf")
    return parse_shapefile(
        shp.read_bytes(),
        dbf.read_bytes() if dbf.exists() else None,
        name=shp.stem,
        crs=crs,
    )


def save_shapefile(layer: VectorLayer, path: str | Path) -> tuple[Path, Path]:
    shp_bytes, dbf_bytes = write_shapefile(layer)
    shp = Path(path).with_suffix(".shp")
    shp.write_bytes(shp_bytes)
    shp.with_suffix(".dbf").write_bytes(dbf_bytes)
    return shp, shp.with_suffix(".dbf")


# --- ESRI ASCII grid ------------------------------------------------------

_GRID_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize")


def parse_ascii_grid(data: bytes | str, *, crs: Crs | None = None) -> RasterGrid:
    text = data.decode("ascii", errors="replace") if isinstance(data, (bytes, bytearray)) else data
    lines = text.splitlines()
    header: dict[str, str] = {}
    body_start = 0
    for i, line in enumerate(lines):
        tokens = line.split()
        if not tokens:
            body_start = i + 1
            continue
        if not tokens[0][0].isalpha() or tokens[0].lower() in ("nan", "inf", "-inf"):
            break
        if len(tokens) != 2:
            raise GridError(f"header line {i + 1} is not 'key value': {line!r}")
        header[tokens[0].lower()] = tokens[1]
        body_start = i + 1

    for key in _GRID_KEYS:
        if key not in header and key.replace("corner", "center") not in header:
            raise HeaderMissingKey(key)
    try:
        n_cols = int(header["ncols"])
        n_rows = int(header["nrows"])
        cell = float(header["cellsize"])
        nodata = float(header.get("nodata_value", DEFAULT_NODATA))
        x0 = _corner(header, "x", cell)
        y0 = _corner(header, "y", cell)
    except ValueError as exc:
        raise GridError(f"bad header value: {exc}") from exc
    if n_cols <= 0 or n_rows <= 0:
        raise GridError(f"non-positive grid size {n_cols}x{n_rows}")

    tokens = " ".join(lines[body_start:]).split()
    if len(tokens) != n_cols * n_rows:
        raise CellCountMismatch(f"expected {n_cols * n_rows} cells, found {len(tokens)}")
    try:
        values = np.array(tokens, dtype=np.float64)
    except ValueError as exc:
        raise NonNumericCell(str(exc)) from exc
    # file lists the top row first; storage is bottom-up
    cells = values.reshape(n_rows, n_cols)[::-1].reshape(-1)
    return RasterGrid(n_cols, n_rows, x0, y0, cell, nodata, cells, crs or UNKNOWN_CRS)


def _corner(header: dict[str, str], axis: str, cell: float) -> float:
    if f"{axis}llcorner" in header:
        return float(header[f"{axis}llcorner"])
    return float(header[f"{axis}llcenter"]) - cell / 2


def _fmt_cell(v: float) -> str:
    return format(v, ".9g")  # 9 significant digits round-trip any float32


def write_ascii_grid(grid: RasterGrid) -> bytes:
    lines = [
        f"ncols {grid.n_cols}",
        f"nrows {grid.n_rows}",
        f"xllcorner {grid.origin_x!r}",
        f"yllcorner {grid.origin_y!r}",
        f"cellsize {grid.cell_size!r}",
        f"NODATA_value {_fmt_cell(grid.nodata_value)}",
    ]
    rows = grid.grid()
    for r in range(grid.n_rows - 1, -1, -1):
        lines.append(" ".join(_fmt_cell(float(v)) for v in rows[r]))
    return ("\n".join(lines) + "\n").encode("ascii")
