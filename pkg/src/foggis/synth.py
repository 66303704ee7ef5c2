"""Seeded synthetic geodata: a redundant shapefile corpus for codec benchmarks and an
Alaska-style overlay stack (one elevation raster, boundary / city / airport vectors).

Generation uses only ``random.Random.random`` and IEEE-exact arithmetic (no libm
transcendental calls), so the bytes are identical on every platform.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

import numpy as np

from .compression import NamedFile
from .geodata import (
    Crs,
    FeatureRecord,
    Point,
    Polygon,
    PolyLine,
    RasterGrid,
    VectorLayer,
    write_ascii_grid,
    write_shapefile,
    write_shx,
)

DEMO_CRS = Crs(2964)
DEMO_EXTENT = (0.0, 0.0, 400_000.0, 300_000.0)
DEMO_CELL = 5_000.0


def unit_circle(n: int) -> list[tuple[float, float]]:
    """``n`` points on the unit circle via the rational parametrisation (no sin/cos)."""
    n += n % 2
    pts = []
    for k in range(n):
        # walk t over (-1, 1] for one half and mirror for the other
        t = -1.0 + 2.0 * (k % (n // 2) + 0.5) / (n // 2)
        x = (1 - t * t) / (1 + t * t)
        y = 2 * t / (1 + t * t)
        pts.append((x, y) if k < n // 2 else (-x, -y))
    return pts


def star_ring(cx, cy, r_min, r_max, n, rng: random.Random) -> list[tuple[float, float]]:
    """Closed, counter-clockwise, star-shaped (hence simple) ring."""
    ring = []
    for ux, uy in unit_circle(n):
        r = r_min + (r_max - r_min) * rng.random()
        ring.append((cx + r * ux, cy + r * uy))
    ring.append(ring[0])
    return ring


# ESRI WKT for EPSG:2964 (NAD27 / Alaska Albers), written as the .prj member
PRJ_2964 = (
    'PROJCS["NAD_1927_Alaska_Albers_Feet",GEOGCS["GCS_North_American_1927",'
    'DATUM["D_North_American_1927",SPHEROID["Clarke_1866",6378206.4,294.9786982]],'
    'PRIMEM["Greenwich",0.0],UNIT["Degree",0.0174532925199433]],'
    'PROJECTION["Albers"],PARAMETER["False_Easting",0.0],PARAMETER["False_Northing",0.0],'
    'PARAMETER["Central_Meridian",-154.0],PARAMETER["Standard_Parallel_1",55.0],'
    'PARAMETER["Standard_Parallel_2",65.0],PARAMETER["Latitude_Of_Origin",50.0],'
    'UNIT["Foot_US",0.3048006096012192]]'
)


def _shapefile_files(layer: VectorLayer, stem: str, full_set: bool = False) -> list[NamedFile]:
    shp, dbf = write_shapefile(layer)
    files = [NamedFile(f"{stem}.shp", shp), NamedFile(f"{stem}.dbf", dbf)]
    if full_set:
        files.insert(1, NamedFile(f"{stem}.shx", write_shx(shp)))
        files.append(NamedFile(f"{stem}.prj", PRJ_2964.encode("ascii")))
    return files


# --- redundant benchmark corpus ---------------------------------------------

_THEMES = ["Coast Line", "Political Boundary", "Inland Water", "Water Course", "Canal", "Aqueduct"]
_SOURCES = ["Global Map v2", "National Mapping Agency", "Survey Office"]


def coastline_layer(rng: random.Random, name: str, n_features: int, n_vertices: int) -> VectorLayer:
    feats = []
    for i in range(n_features):
        x, y = rng.random() * 1000.0, rng.random() * 1000.0
        part = []
        for _ in range(n_vertices):
            # quantised steps: map data digitised on a coarse grid is highly redundant
            x += (int(rng.random() * 5) - 2) * 0.25
            y += (int(rng.random() * 5) - 2) * 0.25
            part.append((x, y))
        attrs = {
            "F_CODE": "BA010" if i % 3 else "BH140",
            "THEME": _THEMES[i % len(_THEMES)],
            "SOURCE": _SOURCES[i % len(_SOURCES)],
            "ORDER": i % 7,
            "LEN_KM": round(n_vertices * 0.25 * (1 + (i % 4)), 2),
        }
        feats.append(FeatureRecord(PolyLine([part]), attrs))
    return VectorLayer.from_features(name, "polyline", feats, DEMO_CRS)


def region_layer(rng: random.Random, name: str, n_features: int, n_vertices: int) -> VectorLayer:
    feats = []
    for i in range(n_features):
        cx, cy = rng.random() * 1000.0, rng.random() * 1000.0
        ring = star_ring(cx, cy, 5.0, 20.0, n_vertices, rng)
        ring = [(round(x * 4) / 4, round(y * 4) / 4) for x, y in ring]
        feats.append(FeatureRecord(Polygon([ring]), {
            "NAM": f"Region {i % 12:02d}",
            "ADM_LEVEL": 1 + i % 3,
            "SOURCE": _SOURCES[i % len(_SOURCES)],
        }))
    return VectorLayer.from_features(name, "polygon", feats, DEMO_CRS)


def redundant_corpus(n_sets: int = 12, seed: int = 0, scale: int = 1) -> list[tuple[str, list[NamedFile]]]:
    """``n_sets`` theme collections, each 2-4 regional tiles of complete shapefile sets
    (.shp/.shx/.dbf/.prj). Even sets are line themes, odd sets area themes."""
    rng = random.Random(seed)
    sets = []
    for k in range(n_sets):
        stem = f"set{k:02d}"
        files: list[NamedFile] = []
        for t in range(2 + int(rng.random() * 3)):
            n_feat = (10 + int(rng.random() * 30)) * scale
            n_vert = 40 + int(rng.random() * 160)
            tile = f"{stem}_t{t}"
            if k % 2 == 0:
                layer = coastline_layer(rng, tile, n_feat, n_vert)
            else:
                layer = region_layer(rng, tile, n_feat, max(8, n_vert // 4))
            files += _shapefile_files(layer, tile, full_set=True)
        sets.append((stem, files))
    return sets


# --- Alaska-style overlay stack ---------------------------------------------


def elevation_grid(rng: random.Random) -> RasterGrid:
    x0, y0, x1, y1 = DEMO_EXTENT
    n_cols = int((x1 - x0) / DEMO_CELL)
    n_rows = int((y1 - y0) / DEMO_CELL)
    peaks = [
        (rng.random() * n_cols, rng.random() * n_rows, 6 + rng.random() * 14, 400 + rng.random() * 1800)
        for _ in range(7)
    ]
    cells = np.zeros((n_rows, n_cols), dtype=np.float64)
    for r in range(n_rows):
        for c in range(n_cols):
            z = 20.0 + 3.0 * r
            for px, py, radius, height in peaks:
                d2 = ((c - px) ** 2 + (r - py) ** 2) / (radius * radius)
                if d2 < 1.0:
                    z += height * (1.0 - d2) ** 2
            cells[r, c] = float(int(z))
    # open sea in the south-west corner
    for r in range(n_rows):
        for c in range(n_cols):
            if c + r < 12:
                cells[r, c] = -9999.0
    return RasterGrid(n_cols, n_rows, x0, y0, DEMO_CELL, -9999.0, cells.reshape(-1), DEMO_CRS)


def demo_layers(seed: int = 0) -> dict[str, VectorLayer | RasterGrid]:
    rng = random.Random(seed)
    srtm = elevation_grid(rng)
    x0, y0, x1, y1 = DEMO_EXTENT
    cx, cy = (x0 + x1) / 2, (y0 + y1) / 2

    outer = star_ring(cx, cy, 110_000.0, 145_000.0, 48, rng)
    lake = star_ring(cx + 30_000.0, cy - 20_000.0, 12_000.0, 18_000.0, 12, rng)
    boundary = VectorLayer.from_features(
        "boundary", "polygon",
        [FeatureRecord(Polygon([[(x, y) for x, y in outer[::-1]], lake]),
                       {"NAME": "Alaska", "TYPE": "State"})],
        DEMO_CRS,
    )

    cities = []
    for i in range(8):
        px = cx + (rng.random() - 0.5) * 160_000.0
        py = cy + (rng.random() - 0.5) * 120_000.0
        ring = star_ring(px, py, 7_000.0, 14_000.0, 10, rng)
        cities.append(FeatureRecord(Polygon([ring[::-1]]), {
            "NAME": f"City {chr(65 + i)}",
            "POP": 1000 + int(rng.random() * 90_000),
            "AREA_KM2": round(40 + rng.random() * 300, 1),
        }))
    city_layer = VectorLayer.from_features("cities", "polygon", cities, DEMO_CRS)

    airports = []
    for i in range(40):
        if i % 2 == 0:
            anchor = cities[i // 2 % len(cities)].geometry.rings[0]
            ax = sum(x for x, _ in anchor[:-1]) / (len(anchor) - 1)
            ay = sum(y for _, y in anchor[:-1]) / (len(anchor) - 1)
            p = (ax + (rng.random() - 0.5) * 6_000.0, ay + (rng.random() - 0.5) * 6_000.0)
        else:
            p = (x0 + 20_000.0 + rng.random() * 360_000.0, y0 + 20_000.0 + rng.random() * 260_000.0)
        elev = srtm.value_at(*p)
        airports.append(FeatureRecord(Point(*p), {
            "NAME": f"Airport {i:02d}",
            "USE": ("Civilian", "Military", "Other")[i % 3],
            "ELEV": elev if elev is not None else 0.0,
        }))
    airport_layer = VectorLayer.from_features("airports", "point", airports, DEMO_CRS)
    return {"srtm": srtm, "boundary": boundary, "cities": city_layer, "airports": airport_layer}


def demo_requests() -> dict[str, dict]:
    return {
        "join": {"operation": {"type": "spatial_join", "points": "airports", "polygons": "cities",
                               "carry": ["NAME", "POP"]}},
        "clip": {"operation": {"type": "clip", "target": "cities",
                               "region": {"bbox": [120_000.0, 90_000.0, 280_000.0, 210_000.0]}}},
        "zonal": {"operation": {"type": "zonal_stats", "raster": "srtm", "polygons": "boundary"}},
        "render": {"layers": ["srtm", "boundary", "cities", "airports"],
                   "operation": {"type": "render", "extent": list(DEMO_EXTENT),
                                 "width_px": 400, "height_px": 300}},
    }


def write_demo(out_dir: str | Path, seed: int = 0) -> list[Path]:
    """Write the demo stack (``srtm.asc`` + three shapefile pairs) and request JSON files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, obj in demo_layers(seed).items():
        if isinstance(obj, RasterGrid):
            path = out / f"{name}.asc"
            path.write_bytes(write_ascii_grid(obj))
            written.append(path)
        else:
            for f in _shapefile_files(obj, name):
                (out / f.name).write_bytes(f.data)
                written.append(out / f.name)
    (out / "demo.json").write_text(json.dumps({"crs": DEMO_CRS.epsg_code, "seed": seed, "source": "synthetic"}, indent=2))
    written.append(out / "demo.json")
    for name, req in demo_requests().items():
        path = out / f"request_{name}.json"
        path.write_text(json.dumps(req, indent=2))
        written.append(path)
    return written
