from __future__ import annotations

from pathlib import Path

from foggis.compression import NamedFile
from foggis.config import GatewayConfig
from foggis.geodata import Crs, FeatureRecord, Point, VectorLayer, write_ascii_grid, write_shapefile
from foggis.synth import demo_layers


def config_in(tmp: Path, **kw) -> GatewayConfig:
    return GatewayConfig(storage_dir=str(tmp / "fog"), cloud_dir=str(tmp / "cloud"), **kw)


def point_pair(x: float = 3.0, y: float = 7.0, stem: str = "pt") -> list[NamedFile]:
    layer = VectorLayer.from_features(stem, "point", [FeatureRecord(Point(x, y), {"NAME": "p"})], Crs(2964))
    shp, dbf = write_shapefile(layer)
    return [NamedFile(f"{stem}.shp", shp), NamedFile(f"{stem}.dbf", dbf)]


def demo_payloads(seed: int = 0) -> dict[str, tuple[str, list[NamedFile]]]:
    """name -> (kind, files) for the demo stack."""
    out = {}
    for name, obj in demo_layers(seed).items():
        if isinstance(obj, VectorLayer):
            shp, dbf = write_shapefile(obj)
            out[name] = ("vector", [NamedFile(f"{name}.shp", shp), NamedFile(f"{name}.dbf", dbf)])
        else:
            out[name] = ("raster", [NamedFile(f"{name}.asc", write_ascii_grid(obj))])
    return out
