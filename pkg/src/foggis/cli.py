"""``foggis`` command line: run the fog gateway and cloud stub, benchmark codecs, ingest and
forward datasets, run overlay jobs, and render reports.

Exit codes: 0 success, 1 runtime/IO failure, 2 bad arguments or config, 3 port in use.
"""

from __future__ import annotations

import argparse
import errno
import hashlib
import io
import json
import logging
import signal
import sys
import threading
import urllib.error
import urllib.parse
import urllib.request
import zipfile
from pathlib import Path
from typing import Sequence

from . import __version__
from .cloud import CloudError, CloudStore, HttpCloudClient, cloud_handler, parse_bbox_param
from .compression import (
    Codec,
    CompressionError,
    NamedFile,
    SelectionPolicy,
    benchmark,
)
from .config import BadConfig, GatewayConfig, load_config
from .gateway import Gateway, GatewayError, TransferModel
from .geodata import Crs, GeodataError, parse_ascii_grid, read_shapefile, save_shapefile
from .httpbase import BackgroundServer
from .overlay import ImageResult, LayerResult, OverlayError, OverlayRequest, StatsResult, run_overlay
from .reference import TAR_NOTE, compare_directory
from .report import ReportDocument, ReportError, render_text
from .server import serve_gateway
from .synth import redundant_corpus, write_demo

log = logging.getLogger("foggis")

QGIS_SAMPLE_URL = "https://download.osgeo.org/qgis/data/qgis_sample_data.zip"


class CliError(Exception):
    def __init__(self, message: str, code: int = 1):
        super().__init__(message)
        self.code = code


def _emit(args, doc, text: str | None = None) -> None:
    if args.json or text is None:
        print(json.dumps(doc, indent=2))
    else:
        print(text, end="" if text.endswith("\n") else "\n")


def _config(args) -> GatewayConfig:
    return load_config(args.config)


def _read_inputs(paths: Sequence[str]) -> list[tuple[str, list[NamedFile]]]:
    """A directory becomes one dataset of all files under it; a file is its own dataset."""
    out = []
    for raw in paths:
        p = Path(raw)
        try:
            if p.is_dir():
                files = [NamedFile(f.relative_to(p).as_posix(), f.read_bytes())
                         for f in sorted(p.rglob("*")) if f.is_file()]
                if not files:
                    raise CliError(f"{p}: directory is empty")
                out.append((p.name, files))
            else:
                out.append((p.name, [NamedFile(p.name, p.read_bytes())]))
        except OSError as exc:
            raise CliError(f"IoError: {exc}") from exc
    return out


def _codecs(text: str | None) -> list[Codec]:
    if not text:
        return list(Codec)
    try:
        return [Codec.parse(c) for c in text.split(",") if c.strip()]
    except ValueError as exc:
        raise CliError(str(exc), 2) from exc


def _policy(text: str | None) -> SelectionPolicy | None:
    if text is None:
        return None
    try:
        return SelectionPolicy.parse(text)
    except ValueError as exc:
        raise CliError(str(exc), 2) from exc


# --- serve / cloud ---------------------------------------------------------------


def _bind(handler_factory, host: str, port: int) -> BackgroundServer:
    try:
        return BackgroundServer(handler_factory, host, port)
    except OSError as exc:
        if exc.errno == errno.EADDRINUSE:
            raise CliError(f"PortInUse: {host}:{port}", 3) from exc
        raise CliError(f"cannot bind {host}:{port}: {exc}") from exc


def _wait_for_signal() -> None:
    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: stop.set())
    stop.wait()


def cmd_serve(args) -> int:
    cfg = _config(args)
    if args.host:
        cfg.host = args.host
    if args.port is not None:
        cfg.port = args.port
    cloud_srv = None
    cloud = None
    if args.with_cloud:
        cloud_srv = _bind(cloud_handler(CloudStore(cfg.cloud_dir)), cfg.host, cfg.cloud_port).start()
        cloud = HttpCloudClient(cloud_srv.url, cfg.forward_timeout)
        print(f"cloud stub listening on {cloud_srv.url}", flush=True)
    gw = Gateway(cfg, cloud)
    try:
        try:
            srv = serve_gateway(gw, cfg.host, cfg.port)
        except OSError as exc:
            if exc.errno == errno.EADDRINUSE:
                raise CliError(f"PortInUse: {cfg.host}:{cfg.port}", 3) from exc
            raise
        srv.start()
        print(f"gateway listening on {srv.url}", flush=True)
        _wait_for_signal()
        srv.stop()
    finally:
        gw.close()  # flushes metrics.json
        if cloud_srv is not None:
            cloud_srv.stop()
    print("gateway stopped; metrics flushed", flush=True)
    return 0


def cmd_cloud(args) -> int:
    cfg = _config(args)
    srv = _bind(cloud_handler(CloudStore(args.dir or cfg.cloud_dir)), args.host or cfg.host,
                cfg.cloud_port if args.port is None else args.port).start()
    print(f"cloud stub listening on {srv.url}", flush=True)
    _wait_for_signal()
    srv.stop()
    return 0


# --- bench / report ----------------------------------------------------------------


def cmd_bench(args) -> int:
    cfg = _config(args)
    if args.synthetic:
        inputs = redundant_corpus(args.synthetic, seed=args.seed)
    elif args.paths:
        inputs = _read_inputs(args.paths)
    else:
        raise CliError("give input paths or --synthetic N", 2)
    codecs = _codecs(args.codecs) if args.codecs else cfg.codec_set()
    policy = _policy(args.policy) or cfg.policy()
    reports = [benchmark(files, codecs, policy, name=name, workers=cfg.workers) for name, files in inputs]
    reference, notes = [], [f"gzip level {reports[0].gzip_level}; archive timestamps pinned"]
    if args.reference:
        reference = [c.to_dict() for c in compare_directory(args.reference)]
        notes.append(TAR_NOTE)
    doc = ReportDocument.build(
        reports,
        TransferModel(cfg.bandwidth, cfg.rtt, cfg.energy_per_byte),
        config={"codecs": [c.value for c in codecs], "policy": str(policy), "seed": args.seed,
                "inputs": "synthetic" if args.synthetic else list(args.paths)},
        notes=notes,
        reference=reference,
    )
    if args.output:
        doc.save(args.output)
    _emit(args, doc.to_dict(), render_text(doc.to_dict(), args.unit))
    return 0


def cmd_report(args) -> int:
    try:
        doc = ReportDocument.load(args.report)
    except ReportError as exc:
        raise CliError(str(exc)) from exc
    _emit(args, doc.to_dict(), render_text(doc.to_dict(), args.unit))
    return 0


# --- gateway operations (local store or --url) --------------------------------------


def _http(url: str, method: str = "GET", body: bytes | None = None, headers: dict | None = None) -> bytes:
    req = urllib.request.Request(url, data=body, method=method, headers=headers or {})
    try:
        with urllib.request.urlopen(req, timeout=60) as resp:
            return resp.read()
    except urllib.error.HTTPError as exc:
        raise CliError(f"{exc.code}: {exc.read().decode(errors='replace')}") from exc
    except urllib.error.URLError as exc:
        raise CliError(f"gateway unreachable: {exc.reason}") from exc


def _multipart(files: Sequence[NamedFile]) -> tuple[str, bytes]:
    boundary = "foggis-" + hashlib.sha256(b"".join(f.data[:64] for f in files)).hexdigest()[:24]
    buf = io.BytesIO()
    for f in files:
        buf.write(f"--{boundary}\r\nContent-Disposition: form-data; name=\"file\"; "
                  f"filename=\"{f.name}\"\r\nContent-Type: application/octet-stream\r\n\r\n".encode())
        buf.write(f.data + b"\r\n")
    buf.write(f"--{boundary}--\r\n".encode())
    return f"multipart/form-data; boundary={boundary}", buf.getvalue()


def _ingest_files(paths: Sequence[str]) -> list[NamedFile]:
    files = []
    for raw in paths:
        p = Path(raw)
        try:
            if p.is_dir():
                files += [NamedFile(f.name, f.read_bytes()) for f in sorted(p.iterdir()) if f.is_file()]
            else:
                files.append(NamedFile(p.name, p.read_bytes()))
        except OSError as exc:
            raise CliError(f"IoError: {exc}") from exc
    return files


def cmd_ingest(args) -> int:
    files = _ingest_files(args.paths)
    name = args.name or Path(args.paths[0]).stem
    if args.url:
        ctype, body = _multipart(files)
        headers = {"Content-Type": ctype, "X-Dataset-Name": name, "X-Dataset-Kind": args.kind}
        if args.crs:
            headers["X-Dataset-Crs"] = str(args.crs)
        query = f"?policy={urllib.parse.quote(args.policy)}" if args.policy else ""
        doc = json.loads(_http(f"{args.url.rstrip('/')}/datasets{query}", "POST", body, headers))
    else:
        with Gateway(_config(args)) as gw:
            rec = gw.ingest(name, args.kind, files, _policy(args.policy),
                            crs=Crs(args.crs) if args.crs else None)
            doc = {**rec.summary(), "report": rec.report.to_dict()}
    text = (f"{doc['id']}  {doc['name']}  {doc['original_size']} -> {doc['compressed_size']} bytes "
            f"via {doc['codec']} (ratio {doc['ratio']:.4f})")
    _emit(args, doc, text)
    return 0


def _model(args, cfg: GatewayConfig) -> TransferModel:
    return TransferModel(
        args.bandwidth if args.bandwidth is not None else cfg.bandwidth,
        args.rtt if args.rtt is not None else cfg.rtt,
        args.energy_per_byte if args.energy_per_byte is not None else cfg.energy_per_byte,
    )


def cmd_forward(args) -> int:
    cfg = _config(args)
    model = _model(args, cfg)
    if args.url:
        body = json.dumps(vars(model)).encode()
        doc = json.loads(_http(f"{args.url.rstrip('/')}/forward/{urllib.parse.quote(args.dataset)}", "POST",
                               body, {"Content-Type": "application/json"}))
    else:
        with Gateway(cfg) as gw:
            doc = gw.forward(args.dataset, model).to_dict()
    text = (f"{doc['dataset_id'][:16]}  {doc['bytes_sent']} bytes via {doc['codec']}: "
            f"{doc['simulated_time']:.6f} s (raw {doc['raw_time']:.6f} s), "
            f"{doc['simulated_energy']:.6g} J, net win: {'yes' if doc['net_win'] else 'no'}")
    _emit(args, doc, text)
    return 0


def cmd_list(args) -> int:
    if args.url:
        query = f"?bbox={urllib.parse.quote(args.bbox)}" if args.bbox else ""
        docs = json.loads(_http(f"{args.url.rstrip('/')}/datasets{query}"))
    else:
        with Gateway(_config(args)) as gw:
            docs = gw.list_datasets(parse_bbox_param(args.bbox) if args.bbox else None)
    text = "\n".join(f"{d['id'][:16]}  {d['name']:<24} {d['kind']:<7} {d['original_size']:>10} "
                     f"{d['compressed_size']:>10}  {d['codec']}" for d in docs) or "(no datasets)"
    _emit(args, docs, text)
    return 0


def cmd_metrics(args) -> int:
    if args.url:
        doc = json.loads(_http(f"{args.url.rstrip('/')}/metrics"))
    else:
        with Gateway(_config(args)) as gw:
            doc = gw.metrics().to_dict()
    _emit(args, doc, "\n".join(f"{k}: {v}" for k, v in doc.items()))
    return 0


# --- overlay ---------------------------------------------------------------------------


def file_resolver(data_dir: str | Path, crs: Crs | None = None):
    """Resolve a layer reference to ``<dir>/<ref>.shp`` (+ .dbf) or ``<dir>/<ref>.asc``."""
    root = Path(data_dir)
    cache: dict = {}

    def resolve(ref: str):
        if ref in cache:
            return cache[ref]
        shp, asc = root / f"{ref}.shp", root / f"{ref}.asc"
        if shp.is_file():
            obj = read_shapefile(shp, crs=crs)
        elif asc.is_file():
            obj = parse_ascii_grid(asc.read_bytes(), crs=crs)
        else:
            raise OverlayError(f"no {ref}.shp or {ref}.asc under {root}")
        cache[ref] = obj
        return obj

    return resolve


def _data_crs(data_dir: Path) -> Crs | None:
    meta = data_dir / "demo.json"
    if meta.is_file():
        return Crs(json.loads(meta.read_text()).get("crs", 0))
    return None


def cmd_overlay(args) -> int:
    data_dir = Path(args.data)
    try:
        request = OverlayRequest.from_json(json.loads(Path(args.request).read_text()))
    except OSError as exc:
        raise CliError(f"IoError: {exc}") from exc
    crs = Crs(args.crs) if args.crs else _data_crs(data_dir)
    result = run_overlay(request, file_resolver(data_dir, crs))
    out = Path(args.output)
    if isinstance(result, ImageResult):
        out.write_bytes(result.data)
        doc = {"kind": "image", "output": str(out), "bytes": len(result.data)}
    elif isinstance(result, LayerResult):
        shp, dbf = save_shapefile(result.layer, out)
        doc = {"kind": result.kind, "output": [str(shp), str(dbf)], "features": len(result.layer.features)}
    elif isinstance(result, StatsResult):
        payload = {"kind": "stats", **result.stats.to_dict()}
        out.write_text(json.dumps(payload, indent=2) + "\n")
        doc = {**payload, "output": str(out)}
    else:  # pragma: no cover - run_overlay returns one of the three
        raise CliError(f"unexpected result {type(result).__name__}")
    _emit(args, doc, f"wrote {doc['output']}")
    return 0


# --- fetch-demo --------------------------------------------------------------------------


def _fetch_qgis_sample(out: Path, timeout: float) -> dict:
    """Download the QGIS sample archive and unpack its Alaska shapefiles, recording checksums."""
    with urllib.request.urlopen(QGIS_SAMPLE_URL, timeout=timeout) as resp:
        blob = resp.read()
    dest = out / "qgis_sample"
    dest.mkdir(parents=True, exist_ok=True)
    sums = {}
    with zipfile.ZipFile(io.BytesIO(blob)) as zf:
        for info in zf.infolist():
            path = Path(info.filename)
            if info.is_dir() or "shapefiles" not in path.parts:
                continue
            data = zf.read(info)
            (dest / path.name).write_bytes(data)
            sums[path.name] = hashlib.sha256(data).hexdigest()
    doc = {"url": QGIS_SAMPLE_URL, "archive_sha256": hashlib.sha256(blob).hexdigest(), "files": sums}
    (dest / "checksums.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return doc


def cmd_fetch_demo(args) -> int:
    out = Path(args.out)
    written = write_demo(out, seed=args.seed)
    doc = {"out": str(out), "synthetic": [p.name for p in written], "online": None}
    if not args.offline:
        try:
            doc["online"] = _fetch_qgis_sample(out, args.timeout)
        except (OSError, zipfile.BadZipFile, urllib.error.URLError) as exc:
            log.warning("online sample unavailable (%s); synthetic demo only", exc)
            doc["online_error"] = str(exc)
    text = f"wrote {len(written)} synthetic demo files to {out}"
    if doc["online"]:
        text += f"; QGIS sample shapefiles in {out / 'qgis_sample'}"
    _emit(args, doc, text)
    return 0


# --- entry point ---------------------------------------------------------------------------


def _gateway_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--url", help="talk to a running gateway instead of the local store")


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    # subcommands repeat the global flags; SUPPRESS keeps them from resetting values given earlier
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", default=d(None), help="YAML or JSON gateway config")
    p.add_argument("--json", action="store_true", default=d(False), help="machine-readable output")
    p.add_argument("--seed", type=int, default=d(0))
    p.add_argument("-v", "--verbose", action="store_true", default=d(False))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)

    parser = argparse.ArgumentParser(prog="foggis", description=__doc__.split("\n\n")[0])
    _global_flags(parser, suppress=False)
    parser.add_argument("--version", action="version", version=f"foggis {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", parents=[common], help="run the gateway HTTP service")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--with-cloud", action="store_true", help="also start the cloud stub on cloud_port")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("cloud", parents=[common], help="run the cloud stub HTTP service")
    p.add_argument("--dir")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.set_defaults(func=cmd_cloud)

    p = sub.add_parser("bench", parents=[common], help="benchmark codecs on files or directories")
    p.add_argument("paths", nargs="*")
    p.add_argument("--synthetic", type=int, metavar="N", help="use N generated shapefile sets instead")
    p.add_argument("--codecs", help="comma list, e.g. store,tar,gzip,tar.gz,zip")
    p.add_argument("--policy", help="minsize | mintime | weighted:<alpha>")
    p.add_argument("--reference", metavar="DIR", help="Global Map shapefile directory to compare against")
    p.add_argument("-o", "--output", help="write the JSON report here")
    p.add_argument("--unit", choices=["bytes", "KB", "MB"], default="bytes")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", parents=[common], help="render a saved JSON report as text")
    p.add_argument("report")
    p.add_argument("--unit", choices=["bytes", "KB", "MB"], default="bytes")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("ingest", parents=[common], help="ingest files as one dataset")
    p.add_argument("paths", nargs="+")
    p.add_argument("--name")
    p.add_argument("--kind", choices=["vector", "raster", "blob"], default="blob")
    p.add_argument("--policy")
    p.add_argument("--crs", type=int, help="EPSG code")
    _gateway_flags(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("forward", parents=[common], help="forward a dataset to the cloud tier")
    p.add_argument("dataset", help="dataset id or name")
    p.add_argument("--bandwidth", type=float, help="bytes/second")
    p.add_argument("--rtt", type=float, help="seconds")
    p.add_argument("--energy-per-byte", type=float, help="joules/byte")
    _gateway_flags(p)
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("list", parents=[common], help="list ingested datasets")
    p.add_argument("--bbox", help="minx,miny,maxx,maxy")
    _gateway_flags(p)
    p.set_defaults(func=cmd_list)

    p = sub.add_parser("metrics", parents=[common], help="show gateway metrics")
    _gateway_flags(p)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("overlay", parents=[common], help="run an overlay request over files in a directory")
    p.add_argument("request", help="OverlayRequest JSON")
    p.add_argument("--data", required=True, help="directory holding <ref>.shp/.dbf and <ref>.asc")
    p.add_argument("-o", "--output", required=True, help="shapefile path, stats JSON or PPM")
    p.add_argument("--crs", type=int, help="EPSG code for every layer (default: demo.json)")
    p.set_defaults(func=cmd_overlay)

    p = sub.add_parser("fetch-demo", parents=[common], help="write the Alaska-style demo stack")
    p.add_argument("out")
    p.add_argument("--offline", action="store_true", help="skip the QGIS sample download")
    p.add_argument("--timeout", type=float, default=20.0)
    p.set_defaults(func=cmd_fetch_demo)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"foggis: {exc}", file=sys.stderr)
        return exc.code
    except BadConfig as exc:
        print(f"foggis: BadConfig: {exc}", file=sys.stderr)
        return 2
    except (GatewayError, OverlayError, GeodataError, CompressionError, CloudError, ValueError) as exc:
        print(f"foggis: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
