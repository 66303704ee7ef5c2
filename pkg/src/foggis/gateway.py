"""The fog-tier gateway: validate -> compress -> store -> forward, plus edge overlay analysis.

Transfer cost uses a linear link model: ``time = rtt + bytes / bandwidth`` and
``energy = bytes * energy_per_byte``. The arithmetic is generic, so exact types such as
:class:`fractions.Fraction` flow through unchanged.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import PurePosixPath
from typing import Sequence

from .cloud import (
    CloudClient,
    CloudEntry,
    CloudError,
    CloudStore,
    CloudUnavailable,
    HttpCloudClient,
    LocalCloudClient,
)
from .compression import (
    Codec,
    CompressionReport,
    NamedFile,
    SelectionPolicy,
    benchmark,
    decode,
    encode,
)
from .config import GatewayConfig
from .geodata import (
    BoundingBox,
    Crs,
    GeodataError,
    RasterGrid,
    VectorLayer,
    compute_bbox,
    parse_ascii_grid,
    parse_shapefile,
)
from .overlay import BadRequest, OverlayRequest, OverlayResult, run_overlay
from .storage import ContentStore, atomic_write, sha256_hex

log = logging.getLogger(__name__)

KINDS = ("vector", "raster", "blob")


class GatewayError(Exception):
    pass


class ParseFailure(GatewayError):
    pass


class DuplicateName(GatewayError):
    pass


class UnknownDataset(GatewayError):
    pass


# --- transfer model --------------------------------------------------------


@dataclass(frozen=True)
class TransferModel:
    bandwidth: float  # bytes / second
    rtt: float = 0.0  # seconds
    energy_per_byte: float = 0.0  # joules / byte

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be > 0")
        if self.rtt < 0 or self.energy_per_byte < 0:
            raise ValueError("rtt and energy_per_byte must be >= 0")

    def time_for(self, n_bytes):
        return self.rtt + n_bytes / self.bandwidth

    def energy_for(self, n_bytes):
        return n_bytes * self.energy_per_byte


@dataclass(frozen=True)
class TransferOutcome:
    dataset_id: str
    codec: Codec
    bytes_sent: int
    original_size: int
    simulated_time: float
    simulated_energy: float
    bytes_saved_vs_raw: int
    raw_time: float  # same link, uncompressed payload
    encode_time: float  # measured compression time for the chosen codec

    @property
    def time_saved(self):
        return self.raw_time - self.simulated_time

    @property
    def net_win(self) -> bool:
        """Compressing paid off: link time saved exceeds measured encode time."""
        return self.time_saved > self.encode_time

    def to_dict(self) -> dict:
        d = {k: (float(v) if k in ("simulated_time", "simulated_energy", "raw_time", "encode_time") else v)
             for k, v in asdict(self).items()}
        d["codec"] = self.codec.value
        d["time_saved"] = float(self.time_saved)
        d["net_win"] = self.net_win
        return d


def simulate_forward(dataset_id: str, report: CompressionReport, codec: Codec, model: TransferModel) -> TransferOutcome:
    sent = report.entry(codec).compressed_size
    return TransferOutcome(
        dataset_id=dataset_id,
        codec=codec,
        bytes_sent=sent,
        original_size=report.original_size,
        simulated_time=model.time_for(sent),
        simulated_energy=model.energy_for(sent),
        bytes_saved_vs_raw=report.original_size - sent,
        raw_time=model.time_for(report.original_size),
        encode_time=report.entry(codec).encode_time,
    )


# --- records and metrics ---------------------------------------------------


@dataclass(frozen=True)
class DatasetRecord:
    id: str
    name: str
    kind: str
    original_size: int
    codec: Codec
    report: CompressionReport
    members: tuple[str, ...]
    object_digest: str
    ingest_time: str
    bbox: BoundingBox | None = None
    crs: Crs | None = None
    _store: ContentStore | None = field(default=None, repr=False, compare=False)

    @property
    def compressed_size(self) -> int:
        return self.report.entry(self.codec).compressed_size

    @property
    def ratio(self) -> float:
        return self.report.entry(self.codec).ratio

    @property
    def compressed_bytes(self) -> bytes:
        return self._store.get_object(self.object_digest)

    def summary(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "kind": self.kind,
            "original_size": self.original_size,
            "compressed_size": self.compressed_size,
            "codec": self.codec.value,
            "ratio": self.ratio,
            "bbox": list(self.bbox.as_tuple()) if self.bbox else None,
            "crs": self.crs.epsg_code if self.crs else None,
        }

    def to_sidecar(self) -> dict:
        doc = self.summary()
        doc.update(
            members=list(self.members),
            object=self.object_digest,
            ingest_time=self.ingest_time,
            report=self.report.to_dict(),
        )
        return doc

    @classmethod
    def from_sidecar(cls, doc: dict, store: ContentStore) -> DatasetRecord:
        return cls(
            id=doc["id"],
            name=doc["name"],
            kind=doc["kind"],
            original_size=doc["original_size"],
            codec=Codec(doc["codec"]),
            report=CompressionReport.from_dict(doc["report"]),
            members=tuple(doc["members"]),
            object_digest=doc["object"],
            ingest_time=doc["ingest_time"],
            bbox=BoundingBox(*doc["bbox"]) if doc.get("bbox") else None,
            crs=Crs(doc["crs"]) if doc.get("crs") is not None else None,
            _store=store,
        )


@dataclass(frozen=True)
class GatewayMetrics:
    requests_total: int = 0
    datasets_total: int = 0
    bytes_ingested: int = 0
    bytes_compressed: int = 0
    bytes_forwarded: int = 0
    bytes_saved: int = 0
    forwards_total: int = 0
    mean_ingest_latency: float = 0.0
    mean_compression_ratio: float = 0.0
    codec_selections: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


class _MetricsState:
    """Mutable accumulators behind :class:`GatewayMetrics`; callers hold the gateway lock."""

    def __init__(self):
        self.requests = 0
        self.datasets = 0
        self.bytes_ingested = 0
        self.bytes_compressed = 0
        self.latency_sum = 0.0
        self.ratio_sum = 0.0
        self.codec_counts: dict[str, int] = {}
        self.forwards = 0
        self.forwarded: dict[str, tuple[int, int]] = {}  # dataset id -> (original, sent)

    def snapshot(self) -> GatewayMetrics:
        n = self.datasets
        fwd_orig = sum(o for o, _ in self.forwarded.values())
        fwd_sent = sum(s for _, s in self.forwarded.values())
        return GatewayMetrics(
            requests_total=self.requests,
            datasets_total=n,
            bytes_ingested=self.bytes_ingested,
            bytes_compressed=self.bytes_compressed,
            bytes_forwarded=fwd_sent,
            bytes_saved=fwd_orig - fwd_sent,
            forwards_total=self.forwards,
            mean_ingest_latency=self.latency_sum / n if n else 0.0,
            mean_compression_ratio=self.ratio_sum / n if n else 0.0,
            codec_selections=dict(sorted(self.codec_counts.items())),
        )

    def to_json(self) -> dict:
        d = dict(vars(self))
        d["forwarded"] = {k: list(v) for k, v in self.forwarded.items()}
        return d

    @classmethod
    def from_json(cls, doc: dict) -> _MetricsState:
        state = cls()
        for k, v in doc.items():
            if hasattr(state, k):
                setattr(state, k, v)
        state.forwarded = {k: tuple(v) for k, v in doc.get("forwarded", {}).items()}
        return state


# --- payload parsing -------------------------------------------------------


def _pick(files: Sequence[NamedFile], suffixes: tuple[str, ...]) -> NamedFile | None:
    hits = [f for f in files if PurePosixPath(f.name).suffix.lower() in suffixes]
    if hits:
        return hits[0]
    return files[0] if len(files) == 1 else None


def parse_payload(kind: str, files: Sequence[NamedFile], crs: Crs | None = None):
    """Parse an uploaded payload; returns a VectorLayer, RasterGrid, or None for blobs."""
    if kind == "blob":
        return None
    try:
        if kind == "vector":
            shp = _pick(files, (".shp",))
            if shp is None:
                raise ParseFailure("vector payload has no .shp member")
            stem = PurePosixPath(shp.name).with_suffix("")
            dbf = next((f for f in files if PurePosixPath(f.name).with_suffix("") == stem
                        and PurePosixPath(f.name).suffix.lower() == ".dbf"), None)
            return parse_shapefile(shp.data, dbf.data if dbf else None, name=stem.name, crs=crs)
        if kind == "raster":
            asc = _pick(files, (".asc", ".grd", ".txt"))
            if asc is None:
                raise ParseFailure("raster payload has no .asc member")
            return parse_ascii_grid(asc.data, crs=crs)
    except GeodataError as exc:
        raise ParseFailure(f"{type(exc).__name__}: {exc}") from exc
    raise ParseFailure(f"unknown dataset kind {kind!r}")


# --- gateway ---------------------------------------------------------------


class Gateway:
    def __init__(self, config: GatewayConfig | None = None, cloud: CloudClient | None = None):
        self.config = config or GatewayConfig()
        self.store = ContentStore(self.config.storage_dir)
        self.pool = ThreadPoolExecutor(max_workers=self.config.workers, thread_name_prefix="codec")
        self._lock = threading.RLock()
        self._records: dict[str, DatasetRecord] = {}
        self._by_name: dict[str, str] = {}
        self._parsed: dict[str, object] = {}
        self._cloud = cloud
        for doc in self.store.iter_sidecars():
            rec = DatasetRecord.from_sidecar(doc, self.store)
            self._records[rec.id] = rec
            self._by_name[rec.name] = rec.id
        metrics_path = self.store.root / "metrics.json"
        self._metrics = (
            _MetricsState.from_json(json.loads(metrics_path.read_text()))
            if metrics_path.is_file()
            else _MetricsState()
        )

    # cloud ------------------------------------------------------------------

    @property
    def cloud(self) -> CloudClient:
        if self._cloud is None:
            if self.config.cloud_url:
                self._cloud = HttpCloudClient(self.config.cloud_url, self.config.forward_timeout)
            else:
                self._cloud = LocalCloudClient(CloudStore(self.config.cloud_dir))
        return self._cloud

    def default_model(self) -> TransferModel:
        c = self.config
        return TransferModel(c.bandwidth, c.rtt, c.energy_per_byte)

    # ingest -----------------------------------------------------------------

    def ingest(
        self,
        name: str,
        kind: str,
        files: Sequence[NamedFile],
        policy: SelectionPolicy | None = None,
        *,
        crs: Crs | None = None,
        codecs: Sequence[Codec] | None = None,
    ) -> DatasetRecord:
        t0 = time.perf_counter()
        files = list(files)
        if not name:
            raise ParseFailure("dataset name is empty")
        if kind not in KINDS:
            raise ParseFailure(f"kind must be one of {KINDS}, got {kind!r}")
        if not files:
            raise ParseFailure("empty payload")
        parsed = parse_payload(kind, files, crs)
        bbox = None
        if isinstance(parsed, VectorLayer) and parsed.features:
            try:
                bbox = compute_bbox(parsed)
            except (GeodataError, ValueError):
                bbox = None
        elif isinstance(parsed, RasterGrid):
            bbox = parsed.bbox

        policy = policy or self.config.policy()
        report = benchmark(
            files,
            codecs or self.config.codec_set(),
            policy,
            name=name,
            executor=self.pool,
        )
        blob = encode(files, report.best_codec)
        ingest_time = datetime.now(timezone.utc).isoformat(timespec="seconds")

        with self._lock:
            self._metrics.requests += 1
            final_name = name
            if name in self._by_name:
                existing = self._records[self._by_name[name]]
                if existing.id == _dataset_id(blob, name):
                    return existing
                if self.config.on_duplicate == "reject":
                    raise DuplicateName(f"dataset {name!r} already exists as {existing.id}")
                n = 2
                while f"{name}@v{n}" in self._by_name:
                    n += 1
                final_name = f"{name}@v{n}"
            rec = DatasetRecord(
                id=_dataset_id(blob, final_name),
                name=final_name,
                kind=kind,
                original_size=report.original_size,
                codec=report.best_codec,
                report=report,
                members=tuple(f.name for f in files),
                object_digest=self.store.put_object(blob),
                ingest_time=ingest_time,
                bbox=bbox,
                crs=crs,
                _store=self.store,
            )
            self.store.write_sidecar(rec.id, rec.to_sidecar())
            self._records[rec.id] = rec
            self._by_name[final_name] = rec.id
            if parsed is not None:
                self._parsed[rec.id] = parsed
            m = self._metrics
            m.datasets += 1
            m.bytes_ingested += rec.original_size
            m.bytes_compressed += rec.compressed_size
            m.ratio_sum += rec.ratio
            m.latency_sum += time.perf_counter() - t0
            m.codec_counts[rec.codec.value] = m.codec_counts.get(rec.codec.value, 0) + 1
        log.info("ingested %s (%s) %d -> %d bytes via %s", rec.name, rec.id[:12],
                 rec.original_size, rec.compressed_size, rec.codec.value)
        return rec

    # lookup -----------------------------------------------------------------

    def get(self, ref: str) -> DatasetRecord:
        with self._lock:
            rec = self._records.get(ref)
            if rec is None and ref in self._by_name:
                rec = self._records[self._by_name[ref]]
        if rec is None:
            raise UnknownDataset(ref)
        return rec

    def original_files(self, ref: str) -> list[NamedFile]:
        rec = self.get(ref)
        return decode(rec.compressed_bytes, rec.codec, names=list(rec.members))

    def list_datasets(self, bbox: BoundingBox | None = None) -> list[dict]:
        with self._lock:
            records = sorted(self._records.values(), key=lambda r: (r.ingest_time, r.name))
        if bbox is not None:
            records = [r for r in records if r.bbox is not None and r.bbox.intersects(bbox)]
        return [r.summary() for r in records]

    # forward ----------------------------------------------------------------

    def forward(self, ref: str, model: TransferModel | None = None, cloud: CloudClient | None = None) -> TransferOutcome:
        rec = self.get(ref)
        model = model or self.default_model()
        cloud = cloud or self.cloud
        entry = CloudEntry(
            id=rec.id,
            name=rec.name,
            codec=rec.codec,
            stored_bytes=rec.compressed_bytes,
            bbox=rec.bbox,
            keywords=(rec.name, rec.kind),
            members=rec.members,
        )
        attempts = 1 + max(0, self.config.forward_retries)
        for attempt in range(attempts):
            try:
                cloud.store(entry)
                break
            except CloudUnavailable:
                if attempt == attempts - 1:
                    with self._lock:
                        self._metrics.requests += 1
                    raise
                time.sleep(min(0.05 * 2**attempt, 1.0))
        outcome = simulate_forward(rec.id, rec.report, rec.codec, model)
        with self._lock:
            m = self._metrics
            m.requests += 1
            m.forwards += 1
            m.forwarded[rec.id] = (rec.original_size, rec.compressed_size)
        return outcome

    # analyze ----------------------------------------------------------------

    def load(self, ref: str):
        """Decoded, parsed payload of a stored dataset (cached; datasets are immutable)."""
        rec = self.get(ref)
        with self._lock:
            hit = self._parsed.get(rec.id)
        if hit is not None:
            return hit
        if rec.kind == "blob":
            raise BadRequest(f"{ref!r} is a blob and cannot take part in overlay analysis")
        parsed = parse_payload(rec.kind, self.original_files(rec.id), rec.crs)
        with self._lock:
            self._parsed.setdefault(rec.id, parsed)
        return parsed

    def analyze(self, request: OverlayRequest) -> OverlayResult:
        with self._lock:
            self._metrics.requests += 1
        return run_overlay(request, self.load)

    # metrics ----------------------------------------------------------------

    def metrics(self) -> GatewayMetrics:
        with self._lock:
            return self._metrics.snapshot()

    def flush(self) -> None:
        with self._lock:
            doc = self._metrics.to_json()
        atomic_write(self.store.root / "metrics.json", json.dumps(doc, indent=2).encode())

    def close(self) -> None:
        self.flush()
        self.pool.shutdown(wait=True)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _dataset_id(blob: bytes, name: str) -> str:
    return sha256_hex(blob + b"\x00" + name.encode("utf-8"))


__all__ = [
    "CloudError",
    "DatasetRecord",
    "DuplicateName",
    "Gateway",
    "GatewayMetrics",
    "ParseFailure",
    "TransferModel",
    "TransferOutcome",
    "UnknownDataset",
    "simulate_forward",
]
