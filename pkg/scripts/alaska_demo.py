"""Run the Alaska-style overlay stack through a local gateway end to end.

Writes the demo layers, ingests them, forwards each to an HTTP cloud stub, runs the
four demo overlay requests and prints the transfer outcomes and gateway metrics.

    python scripts/alaska_demo.py --out demo-run
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

from foggis.cloud import CloudStore, HttpCloudClient, cloud_handler
from foggis.compression import NamedFile
from foggis.config import GatewayConfig
from foggis.gateway import Gateway, TransferModel
from foggis.geodata import save_shapefile
from foggis.httpbase import BackgroundServer
from foggis.overlay import ImageResult, LayerResult, OverlayRequest
from foggis.synth import DEMO_CRS, demo_requests, write_demo

LAYERS = {"srtm": ("raster", [".asc"]), "boundary": ("vector", [".shp", ".dbf"]),
          "cities": ("vector", [".shp", ".dbf"]), "airports": ("vector", [".shp", ".dbf"])}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--out", default="demo-run")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--bandwidth", type=float, default=1_250_000.0, help="bytes/second")
    ap.add_argument("--rtt", type=float, default=0.05)
    args = ap.parse_args()

    out = Path(args.out)
    data = out / "data"
    write_demo(data, seed=args.seed)
    model = TransferModel(args.bandwidth, args.rtt, 1e-7)

    with BackgroundServer(cloud_handler(CloudStore(out / "cloud"))) as cloud_srv:
        cfg = GatewayConfig(storage_dir=str(out / "fog"), cloud_dir=str(out / "cloud"))
        with Gateway(cfg, HttpCloudClient(cloud_srv.url)) as gw:
            for name, (kind, exts) in LAYERS.items():
                files = [NamedFile(f"{name}{e}", (data / f"{name}{e}").read_bytes()) for e in exts]
                rec = gw.ingest(name, kind, files, crs=DEMO_CRS)
                t = gw.forward(rec.id, model)
                print(f"{name:<9} {rec.original_size:>8} -> {rec.compressed_size:>7} B via {rec.codec.value:<6} "
                      f"forward {float(t.simulated_time):.4f} s (raw {float(t.raw_time):.4f} s)")

            for label, doc in demo_requests().items():
                result = gw.analyze(OverlayRequest.from_json(doc))
                if isinstance(result, ImageResult):
                    path = out / f"{label}.ppm"
                    path.write_bytes(result.data)
                elif isinstance(result, LayerResult):
                    path = save_shapefile(result.layer, out / f"{label}.shp")[0]
                else:
                    path = out / f"{label}.json"
                    path.write_text(json.dumps(result.stats.to_dict(), indent=2) + "\n")
                print(f"{label:<7} -> {path}")
            print(json.dumps(gw.metrics().to_dict(), indent=2))


if __name__ == "__main__":
    main()
