"""Minimal cloud tier: stores forwarded compressed artifacts, decodes on demand,
and answers catalog queries by bounding box and keyword.

Two clients speak the same contract: :class:`LocalCloudClient` wraps a
:class:`CloudStore` in-process, :class:`HttpCloudClient` talks to :func:`cloud_handler`
over HTTP (``PUT /store/{id}``, ``GET /retrieve/{id}?decoded=``, ``GET /catalog``).
"""

from __future__ import annotations

import json
import threading
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

from .compression import Codec, CompressionError, NamedFile, decode, tar_pack
from .geodata import BoundingBox
from .httpbase import HttpError, JsonHandler
from .storage import ContentStore, StoreError, sha256_hex


class CloudError(Exception):
    pass


class IdConflict(CloudError):
    pass


class UnknownId(CloudError):
    pass


class CloudUnavailable(CloudError):
    pass


class CloudCorrupt(CloudError):
    pass


@dataclass(frozen=True)
class CloudEntry:
    id: str
    name: str
    codec: Codec
    stored_bytes: bytes = field(repr=False)
    bbox: BoundingBox | None = None
    keywords: tuple[str, ...] = ()
    members: tuple[str, ...] = ()  # member names; the single-file store codec does not carry them

    @property
    def compressed_size(self) -> int:
        return len(self.stored_bytes)

    def meta(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "codec": self.codec.value,
            "compressed_size": self.compressed_size,
            "bbox": list(self.bbox.as_tuple()) if self.bbox else None,
            "keywords": list(self.keywords),
            "members": list(self.members),
        }


@dataclass(frozen=True)
class Ack:
    id: str
    stored_size: int


def _bbox_from(value) -> BoundingBox | None:
    return BoundingBox(*value) if value else None


def decoded_payload(files: list[NamedFile]) -> bytes:
    """Single-member datasets decode to their raw bytes, multi-member ones to a plain tar."""
    return files[0].data if len(files) == 1 else tar_pack(files)


class CloudStore:
    def __init__(self, root: str | Path):
        self.store_dir = ContentStore(root)
        self._lock = threading.Lock()
        self._catalog: dict[str, dict] = {}
        for doc in self.store_dir.iter_sidecars():
            self._catalog[doc["id"]] = doc

    def store(self, entry: CloudEntry) -> Ack:
        meta = entry.meta()
        with self._lock:
            existing = self._catalog.get(entry.id)
            digest = sha256_hex(entry.stored_bytes)
            if existing is not None:
                if existing["object"] != digest:
                    raise IdConflict(f"{entry.id} already stored with different bytes")
                return Ack(entry.id, existing["compressed_size"])
            meta["object"] = self.store_dir.put_object(entry.stored_bytes)
            self.store_dir.write_sidecar(entry.id, meta)
            self._catalog[entry.id] = meta
        return Ack(entry.id, entry.compressed_size)

    def _meta(self, entry_id: str) -> dict:
        with self._lock:
            meta = self._catalog.get(entry_id)
        if meta is None:
            raise UnknownId(entry_id)
        return meta

    def retrieve_raw(self, entry_id: str) -> tuple[bytes, Codec]:
        meta = self._meta(entry_id)
        try:
            return self.store_dir.get_object(meta["object"]), Codec(meta["codec"])
        except StoreError as exc:
            raise CloudCorrupt(str(exc)) from exc

    def retrieve_files(self, entry_id: str) -> list[NamedFile]:
        meta = self._meta(entry_id)
        raw, codec = self.retrieve_raw(entry_id)
        try:
            return decode(raw, codec, names=meta.get("members") or None)
        except CompressionError as exc:
            raise CloudCorrupt(f"{entry_id}: {exc}") from exc

    def retrieve(self, entry_id: str, decoded: bool = False) -> bytes:
        if decoded:
            return decoded_payload(self.retrieve_files(entry_id))
        return self.retrieve_raw(entry_id)[0]

    def catalog_search(self, bbox: BoundingBox | None = None, keyword: str | None = None) -> list[dict]:
        with self._lock:
            docs = sorted(self._catalog.values(), key=lambda d: d["id"])
        return [_summary(d) for d in docs if _matches(d, bbox, keyword)]


def _summary(doc: dict) -> dict:
    return {k: doc[k] for k in ("id", "name", "codec", "compressed_size", "bbox", "keywords")}


def _matches(doc: dict, bbox: BoundingBox | None, keyword: str | None) -> bool:
    if bbox is not None:
        box = _bbox_from(doc.get("bbox"))
        if box is None or not box.intersects(bbox):
            return False
    if keyword is not None:
        if keyword.casefold() not in {k.casefold() for k in doc.get("keywords", ())}:
            return False
    return True


class CloudClient(Protocol):
    def store(self, entry: CloudEntry) -> Ack: ...

    def retrieve(self, entry_id: str, decoded: bool = False) -> bytes: ...

    def catalog_search(self, bbox: BoundingBox | None = None, keyword: str | None = None) -> list[dict]: ...


class LocalCloudClient:
    def __init__(self, store: CloudStore):
        self.backend = store
        self.endpoint = f"local:{store.store_dir.root}"

    def store(self, entry: CloudEntry) -> Ack:
        return self.backend.store(entry)

    def retrieve(self, entry_id: str, decoded: bool = False) -> bytes:
        return self.backend.retrieve(entry_id, decoded)

    def catalog_search(self, bbox=None, keyword=None) -> list[dict]:
        return self.backend.catalog_search(bbox, keyword)


class HttpCloudClient:
    def __init__(self, base_url: str, timeout: float = 10.0):
        self.base_url = base_url.rstrip("/")
        self.endpoint = self.base_url
        self.timeout = timeout

    def _call(self, method: str, path: str, body: bytes | None = None, headers: dict | None = None):
        req = urllib.request.Request(self.base_url + path, data=body, method=method, headers=headers or {})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return resp.read(), dict(resp.headers)
        except urllib.error.HTTPError as exc:
            payload = exc.read()
            try:
                err = json.loads(payload)
            except ValueError:
                err = {"error": "HttpError", "detail": payload.decode(errors="replace")}
            kind = err.get("error")
            if exc.code == 409 or kind == "IdConflict":
                raise IdConflict(err.get("detail", "")) from exc
            if exc.code == 404:
                raise UnknownId(err.get("detail", "")) from exc
            if kind == "CorruptStream":
                raise CloudCorrupt(err.get("detail", "")) from exc
            raise CloudError(f"{exc.code} {kind}: {err.get('detail')}") from exc
        except (urllib.error.URLError, ConnectionError, TimeoutError, OSError) as exc:
            raise CloudUnavailable(f"{self.base_url}: {exc}") from exc

    def store(self, entry: CloudEntry) -> Ack:
        meta = json.dumps({k: v for k, v in entry.meta().items() if k not in ("id", "compressed_size")})
        body, _ = self._call(
            "PUT",
            f"/store/{urllib.parse.quote(entry.id)}",
            entry.stored_bytes,
            {"Content-Type": "application/octet-stream", "X-Entry-Meta": meta},
        )
        doc = json.loads(body)
        return Ack(doc["id"], doc["stored_size"])

    def retrieve(self, entry_id: str, decoded: bool = False) -> bytes:
        body, _ = self._call("GET", f"/retrieve/{urllib.parse.quote(entry_id)}?decoded={int(decoded)}")
        return body

    def catalog_search(self, bbox=None, keyword=None) -> list[dict]:
        params = {}
        if bbox is not None:
            params["bbox"] = ",".join(repr(v) for v in bbox.as_tuple())
        if keyword is not None:
            params["keyword"] = keyword
        query = f"?{urllib.parse.urlencode(params)}" if params else ""
        body, _ = self._call("GET", f"/catalog{query}")
        return json.loads(body)


def parse_bbox_param(text: str) -> BoundingBox:
    try:
        vals = [float(v) for v in text.split(",")]
        return BoundingBox(*vals)
    except (TypeError, ValueError) as exc:
        raise HttpError(400, "BadBbox", f"{text!r}: {exc}") from exc


def cloud_handler(store: CloudStore) -> type[JsonHandler]:
    class CloudHandler(JsonHandler):
        def route_PUT(self):
            parts = self.path_parts
            if len(parts) != 2 or parts[0] != "store":
                raise HttpError(404, "NotFound", self.path)
            entry_id = urllib.parse.unquote(parts[1])
            body = self.read_body()
            try:
                meta = json.loads(self.headers.get("X-Entry-Meta") or "{}")
                entry = CloudEntry(
                    id=entry_id,
                    name=meta.get("name", entry_id),
                    codec=Codec(meta.get("codec", "store")),
                    stored_bytes=body,
                    bbox=_bbox_from(meta.get("bbox")),
                    keywords=tuple(meta.get("keywords", ())),
                    members=tuple(meta.get("members", ())),
                )
            except (ValueError, TypeError) as exc:
                raise HttpError(400, "BadEntry", str(exc)) from exc
            try:
                ack = store.store(entry)
            except IdConflict as exc:
                raise HttpError(409, "IdConflict", str(exc)) from exc
            self.send_json(201, {"id": ack.id, "stored_size": ack.stored_size})

        def route_GET(self):
            parts = self.path_parts
            if parts == ["catalog"]:
                q = self.query
                bbox = parse_bbox_param(q["bbox"]) if q.get("bbox") else None
                self.send_json(200, store.catalog_search(bbox, q.get("keyword")))
                return
            if len(parts) == 2 and parts[0] == "retrieve":
                entry_id = urllib.parse.unquote(parts[1])
                decoded = self.query.get("decoded", "0").lower() in ("1", "true", "yes")
                try:
                    if decoded:
                        files = store.retrieve_files(entry_id)
                        ctype = "application/octet-stream" if len(files) == 1 else "application/x-tar"
                        self.send_bytes(200, decoded_payload(files), ctype,
                                        {"X-Members": json.dumps([f.name for f in files])})
                    else:
                        raw, codec = store.retrieve_raw(entry_id)
                        self.send_bytes(200, raw, "application/octet-stream", {"X-Codec": codec.value})
                except UnknownId as exc:
                    raise HttpError(404, "UnknownId", str(exc)) from exc
                except CloudCorrupt as exc:
                    raise HttpError(500, "CorruptStream", str(exc)) from exc
                return
            raise HttpError(404, "NotFound", self.path)

    return CloudHandler
