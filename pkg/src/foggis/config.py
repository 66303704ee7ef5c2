"""Gateway configuration: a YAML or JSON file, overridden by ``FOGGIS_*`` environment variables.

Every key and its default::

    host: 127.0.0.1            # gateway listen address
    port: 8640                 # gateway listen port
    storage_dir: fog-data      # content-addressed store + sidecars
    cloud_url: null            # cloud stub base URL; null -> in-process stub under cloud_dir
    cloud_dir: cloud-data      # storage for the in-process / co-started cloud stub
    cloud_port: 8641           # port used when `serve --with-cloud` starts the stub
    workers: 2                 # compression worker pool (dual-core fog device)
    codecs: [store, tar, gzip, tar.gz, zip]
    default_policy: minsize    # minsize | mintime | weighted:<alpha>
    on_duplicate: reject       # reject | version
    forward_retries: 2         # extra attempts after a failed cloud transfer
    forward_timeout: 10.0      # seconds per cloud request
    bandwidth: 1250000.0       # default link model: bytes/second (10 Mbit/s)
    rtt: 0.05                  # seconds
    energy_per_byte: 1.0e-7    # joules per byte sent
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .compression import ALL_CODECS, Codec, SelectionPolicy


class BadConfig(Exception):
    pass


@dataclass
class GatewayConfig:
    host: str = "127.0.0.1"
    port: int = 8640
    storage_dir: str = "fog-data"
    cloud_url: str | None = None
    cloud_dir: str = "cloud-data"
    cloud_port: int = 8641
    workers: int = 2
    codecs: list[str] = field(default_factory=lambda: [c.value for c in ALL_CODECS])
    default_policy: str = "minsize"
    on_duplicate: str = "reject"
    forward_retries: int = 2
    forward_timeout: float = 10.0
    bandwidth: float = 1_250_000.0
    rtt: float = 0.05
    energy_per_byte: float = 1e-7

    def __post_init__(self):
        try:
            self.codec_set()
            self.policy()
        except ValueError as exc:
            raise BadConfig(str(exc)) from exc
        if self.workers < 1:
            raise BadConfig("workers must be >= 1")
        if self.on_duplicate not in ("reject", "version"):
            raise BadConfig(f"on_duplicate must be reject|version, got {self.on_duplicate!r}")
        if self.bandwidth <= 0 or self.rtt < 0 or self.energy_per_byte < 0:
            raise BadConfig("transfer model needs bandwidth > 0, rtt >= 0, energy_per_byte >= 0")

    def codec_set(self) -> list[Codec]:
        return [Codec.parse(c) for c in self.codecs]

    def policy(self) -> SelectionPolicy:
        return SelectionPolicy.parse(self.default_policy)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _coerce(f: dataclasses.Field, raw: str):
    if f.name == "codecs":
        return [c.strip() for c in raw.split(",") if c.strip()]
    if f.name == "cloud_url":
        return raw or None
    typ = {"int": int, "float": float}.get(str(f.type))
    return typ(raw) if typ else raw


def load_config(path: str | Path | None = None, env: dict | None = None) -> GatewayConfig:
    """Read ``path`` (YAML, or JSON by extension), then apply ``FOGGIS_<KEY>`` overrides."""
    doc: dict = {}
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise BadConfig(f"{path}: {exc}") from exc
        try:
            if path.suffix.lower() == ".json":
                doc = json.loads(text) if text.strip() else {}
            else:
                doc = yaml.safe_load(text) or {}
        except json.JSONDecodeError as exc:
            raise BadConfig(f"{path}: line {exc.lineno}: {exc.msg}") from exc
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f"line {mark.line + 1}" if mark is not None else "unknown line"
            raise BadConfig(f"{path}: {where}: {getattr(exc, 'problem', exc)}") from exc
        if not isinstance(doc, dict):
            raise BadConfig(f"{path}: top level must be a mapping")
    fields = {f.name: f for f in dataclasses.fields(GatewayConfig)}
    unknown = sorted(set(doc) - set(fields))
    if unknown:
        raise BadConfig(f"unknown config keys {unknown}")
    env = os.environ if env is None else env
    for name, f in fields.items():
        raw = env.get(f"FOGGIS_{name.upper()}")
        if raw is not None:
            try:
                doc[name] = _coerce(f, raw)
            except ValueError as exc:
                raise BadConfig(f"FOGGIS_{name.upper()}: {exc}") from exc
    try:
        return GatewayConfig(**doc)
    except TypeError as exc:
        raise BadConfig(str(exc)) from exc
