"""Content-addressed object files plus one JSON sidecar per record.

Layout under ``root``::

    objects/<sha256 hex>      stored (compressed) bytes
    records/<id>.json         metadata sidecar

Both the gateway and the cloud stub use this layout; catalogs are rebuilt from the
sidecars at startup.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Iterator


class StoreError(Exception):
    pass


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class ContentStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.objects = self.root / "objects"
        self.records = self.root / "records"
        self.objects.mkdir(parents=True, exist_ok=True)
        self.records.mkdir(parents=True, exist_ok=True)

    def put_object(self, data: bytes) -> str:
        digest = sha256_hex(data)
        path = self.objects / digest
        if not path.exists():
            atomic_write(path, data)
        return digest

    def get_object(self, digest: str) -> bytes:
        path = self.objects / digest
        if not path.is_file():
            raise StoreError(f"missing object {digest}")
        data = path.read_bytes()
        if sha256_hex(data) != digest:
            raise StoreError(f"object {digest} failed its digest check")
        return data

    def has_object(self, digest: str) -> bool:
        return (self.objects / digest).is_file()

    def _sidecar(self, record_id: str) -> Path:
        if not record_id or "/" in record_id or record_id.startswith("."):
            raise StoreError(f"bad record id {record_id!r}")
        return self.records / f"{record_id}.json"

    def write_sidecar(self, record_id: str, doc: dict) -> None:
        atomic_write(self._sidecar(record_id), json.dumps(doc, indent=2, sort_keys=True).encode())

    def read_sidecar(self, record_id: str) -> dict | None:
        path = self._sidecar(record_id)
        if not path.is_file():
            return None
        return json.loads(path.read_text())

    def iter_sidecars(self) -> Iterator[dict]:
        for path in sorted(self.records.glob("*.json")):
            yield json.loads(path.read_text())
