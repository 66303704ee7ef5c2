"""Lossless codecs for the fog tier, plus a benchmark harness and codec selection.

Codecs are byte-deterministic: archive timestamps, owners and modes are pinned, and
deflate always runs at level 6.
"""

from __future__ import annotations

import enum
import io
import json
import struct
import tarfile
import time
import zipfile
import zlib
from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import PurePosixPath
from typing import Iterable, Sequence

GZIP_LEVEL = 6
GZIP_MAGIC = b"\x1f\x8b"
ZIP_MAGICS = (b"PK\x03\x04", b"PK\x05\x06")
ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)  # earliest timestamp a zip header can hold
FILE_MODE = 0o644
DEFAULT_MEMBER = "data"
STORE_MAGIC = b"FGSTORE1"


class Codec(enum.Enum):
    # declaration order is the tie-break order for selection
    STORE = "store"
    TAR = "tar"
    GZIP = "gzip"
    TARGZ = "tar.gz"
    ZIP = "zip"

    @property
    def rank(self) -> int:
        return list(Codec).index(self)

    @classmethod
    def parse(cls, text: str) -> Codec:
        key = text.strip().lower().lstrip(".")
        aliases = {"tgz": "tar.gz", "targz": "tar.gz", "gz": "gzip", "identity": "store"}
        return cls(aliases.get(key, key))


ALL_CODECS = tuple(Codec)
REAL_CODECS = (Codec.TAR, Codec.GZIP, Codec.TARGZ, Codec.ZIP)


class CompressionError(Exception):
    pass


class EmptyInput(CompressionError):
    pass


class MultiFileGzip(CompressionError):
    pass


class CorruptStream(CompressionError):
    pass


class UnknownFormat(CompressionError):
    pass


class InvalidMemberName(CompressionError):
    pass


def check_member_name(name: str) -> str:
    if not name or name.startswith("/") or "\\" in name or "\x00" in name:
        raise InvalidMemberName(f"bad member name {name!r}")
    if any(seg in ("", "..", ".") for seg in name.split("/")):
        raise InvalidMemberName(f"bad member name {name!r}")
    return name


@dataclass(frozen=True)
class NamedFile:
    name: str
    data: bytes

    def __post_init__(self):
        check_member_name(self.name)
        object.__setattr__(self, "data", bytes(self.data))

    @property
    def size(self) -> int:
        return len(self.data)


# --- gzip framing (RFC 1952) ------------------------------------------------

_FNAME = 0x08
_FEXTRA = 0x04
_FCOMMENT = 0x10
_FHCRC = 0x02


def gzip_compress(data: bytes, name: str | None = None) -> bytes:
    flags = _FNAME if name else 0
    # mtime 0, XFL 0, OS 255 (unknown): keeps output identical across hosts
    header = GZIP_MAGIC + struct.pack("<BBIBB", 8, flags, 0, 0, 255)
    if name:
        header += name.encode("utf-8") + b"\x00"
    co = zlib.compressobj(GZIP_LEVEL, zlib.DEFLATED, -zlib.MAX_WBITS)
    body = co.compress(data) + co.flush()
    trailer = struct.pack("<II", zlib.crc32(data), len(data) & 0xFFFFFFFF)
    return header + body + trailer


def gzip_decompress(blob: bytes) -> tuple[str | None, bytes]:
    if len(blob) < 18 or blob[:2] != GZIP_MAGIC:
        raise UnknownFormat("not a gzip stream")
    method, flags = blob[2], blob[3]
    if method != 8:
        raise UnknownFormat(f"gzip compression method {method}")
    pos = 10
    name = None
    try:
        if flags & _FEXTRA:
            (xlen,) = struct.unpack_from("<H", blob, pos)
            pos += 2 + xlen
        if flags & _FNAME:
            end = blob.index(b"\x00", pos)
            name = blob[pos:end].decode("utf-8", errors="replace")
            pos = end + 1
        if flags & _FCOMMENT:
            pos = blob.index(b"\x00", pos) + 1
        if flags & _FHCRC:
            pos += 2
    except (ValueError, struct.error) as exc:
        raise CorruptStream(f"gzip header: {exc}") from exc
    d = zlib.decompressobj(-zlib.MAX_WBITS)
    try:
        data = d.decompress(blob[pos:]) + d.flush()
    except zlib.error as exc:
        raise CorruptStream(f"deflate: {exc}") from exc
    if not d.eof:
        raise CorruptStream("deflate stream truncated")
    trailer = d.unused_data
    if len(trailer) < 8:
        raise CorruptStream("gzip trailer truncated")
    crc, isize = struct.unpack_from("<II", trailer)
    if crc != zlib.crc32(data):
        raise CorruptStream("CRC32 mismatch")
    if isize != len(data) & 0xFFFFFFFF:
        raise CorruptStream("ISIZE mismatch")
    if trailer[8:].strip(b"\x00"):
        raise CorruptStream("trailing bytes after gzip member")
    return name, data


# --- tar (USTAR) -----------------------------------------------------------

_BLOCK = tarfile.BLOCKSIZE


def tar_pack(files: Sequence[NamedFile]) -> bytes:
    # Headers come from tarfile; blocks are assembled here so the archive ends after
    # the two-block terminator instead of being padded to tarfile's 10 KiB record.
    out = io.BytesIO()
    for f in files:
        info = tarfile.TarInfo(f.name)
        info.size = f.size
        info.mtime = 0
        info.mode = FILE_MODE
        info.uid = info.gid = 0
        info.uname = info.gname = ""
        try:
            out.write(info.tobuf(format=tarfile.USTAR_FORMAT, encoding="utf-8", errors="strict"))
        except ValueError as exc:
            raise InvalidMemberName(f"{f.name!r}: {exc}") from exc
        out.write(f.data)
        pad = -f.size % _BLOCK
        out.write(b"\x00" * pad)
    out.write(b"\x00" * (2 * _BLOCK))
    return out.getvalue()


def tar_unpack(blob: bytes) -> list[NamedFile]:
    if len(blob) < 2 * _BLOCK:
        raise UnknownFormat("too short for a tar archive")
    if blob[257:262] != b"ustar" and blob[:_BLOCK].strip(b"\x00"):
        raise UnknownFormat("no ustar magic in first header")
    files = []
    try:
        with tarfile.open(fileobj=io.BytesIO(blob), mode="r:", encoding="utf-8") as tf:
            for member in tf:
                if not member.isfile():
                    continue
                fh = tf.extractfile(member)
                data = fh.read() if fh else b""
                if len(data) != member.size:
                    raise CorruptStream(f"member {member.name!r} truncated")
                files.append(NamedFile(member.name, data))
            end = tf.offset
    except tarfile.TarError as exc:
        raise CorruptStream(f"tar: {exc}") from exc
    # tarfile stops quietly at a short or garbled header; a real end is two zero blocks
    if blob[end : end + 2 * _BLOCK] != bytes(2 * _BLOCK):
        raise CorruptStream(f"tar archive ends without its terminator at offset {end}")
    return files


# --- zip -------------------------------------------------------------------


def zip_pack(files: Sequence[NamedFile]) -> bytes:
    out = io.BytesIO()
    with zipfile.ZipFile(out, "w", compression=zipfile.ZIP_DEFLATED, compresslevel=GZIP_LEVEL) as zf:
        for f in files:
            info = zipfile.ZipInfo(f.name, date_time=ZIP_EPOCH)
            info.compress_type = zipfile.ZIP_DEFLATED
            info.create_system = 3
            info.external_attr = (0o100000 | FILE_MODE) << 16
            zf.writestr(info, f.data, compress_type=zipfile.ZIP_DEFLATED, compresslevel=GZIP_LEVEL)
    return out.getvalue()


def zip_unpack(blob: bytes) -> list[NamedFile]:
    if not blob.startswith(ZIP_MAGICS):
        raise UnknownFormat("no zip signature")
    try:
        with zipfile.ZipFile(io.BytesIO(blob)) as zf:
            return [
                NamedFile(info.filename, zf.read(info))
                for info in zf.infolist()
                if not info.is_dir()
            ]
    except (zipfile.BadZipFile, zlib.error, EOFError, ValueError, NotImplementedError) as exc:
        raise CorruptStream(f"zip: {exc}") from exc


# --- store -----------------------------------------------------------------


def store_pack(files: Sequence[NamedFile]) -> bytes:
    """Identity for a single file; a minimal length-prefixed container for several."""
    if len(files) == 1:
        return files[0].data
    out = bytearray(STORE_MAGIC + struct.pack("<I", len(files)))
    for f in files:
        name = f.name.encode("utf-8")
        out += struct.pack("<HQ", len(name), f.size) + name + f.data
    return bytes(out)


def store_unpack(blob: bytes, names: Sequence[str] | None) -> list[NamedFile]:
    if names is None or len(names) <= 1:
        return [NamedFile(names[0] if names else DEFAULT_MEMBER, blob)]
    if not blob.startswith(STORE_MAGIC):
        raise UnknownFormat("multi-member store container lacks its magic")
    try:
        (count,) = struct.unpack_from("<I", blob, len(STORE_MAGIC))
        pos = len(STORE_MAGIC) + 4
        files = []
        for _ in range(count):
            nlen, size = struct.unpack_from("<HQ", blob, pos)
            pos += 10
            name = blob[pos : pos + nlen].decode("utf-8")
            pos += nlen
            if pos + size > len(blob):
                raise CorruptStream("store member truncated")
            files.append(NamedFile(name, blob[pos : pos + size]))
            pos += size
    except (struct.error, UnicodeDecodeError) as exc:
        raise CorruptStream(f"store container: {exc}") from exc
    if pos != len(blob):
        raise CorruptStream("trailing bytes in store container")
    return files


# --- public codec surface --------------------------------------------------


def encode(files: Sequence[NamedFile], codec: Codec) -> bytes:
    files = list(files)
    if not files:
        raise EmptyInput("nothing to encode")
    if codec is Codec.STORE:
        return store_pack(files)
    if codec is Codec.TAR:
        return tar_pack(files)
    if codec is Codec.GZIP:
        if len(files) > 1:
            raise MultiFileGzip(f"gzip wraps one stream, got {len(files)} files")
        return gzip_compress(files[0].data, files[0].name)
    if codec is Codec.TARGZ:
        return gzip_compress(tar_pack(files))
    if codec is Codec.ZIP:
        return zip_pack(files)
    raise ValueError(codec)


def decode(blob: bytes, codec: Codec, *, names: Sequence[str] | None = None) -> list[NamedFile]:
    """Inverse of :func:`encode`.

    ``names`` is only consulted for :attr:`Codec.STORE`, whose single-file form is the
    raw payload and so carries no member name.
    """
    blob = bytes(blob)
    if codec is Codec.STORE:
        return store_unpack(blob, names)
    if codec is Codec.TAR:
        return tar_unpack(blob)
    if codec is Codec.GZIP:
        name, data = gzip_decompress(blob)
        return [NamedFile(name or (names[0] if names else DEFAULT_MEMBER), data)]
    if codec is Codec.TARGZ:
        _, tar = gzip_decompress(blob)
        return tar_unpack(tar)
    if codec is Codec.ZIP:
        return zip_unpack(blob)
    raise ValueError(codec)


def applicable(codec: Codec, files: Sequence[NamedFile]) -> bool:
    return not (codec is Codec.GZIP and len(files) > 1)


# --- selection policy ------------------------------------------------------


@dataclass(frozen=True)
class SelectionPolicy:
    kind: str = "minsize"  # minsize | mintime | weighted
    alpha: float = 1.0  # weight on normalized size for "weighted"

    def __post_init__(self):
        if self.kind not in ("minsize", "mintime", "weighted"):
            raise ValueError(f"unknown policy {self.kind!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")

    @classmethod
    def parse(cls, text: str) -> SelectionPolicy:
        text = text.strip().lower()
        if text.startswith("weighted"):
            _, _, alpha = text.partition(":")
            return cls("weighted", float(alpha) if alpha else 0.5)
        return cls({"min_size": "minsize", "min_encode_time": "mintime"}.get(text, text))

    def __str__(self):
        return f"weighted:{self.alpha:g}" if self.kind == "weighted" else self.kind


MIN_SIZE = SelectionPolicy("minsize")
MIN_ENCODE_TIME = SelectionPolicy("mintime")


@dataclass(frozen=True)
class CodecEntry:
    codec: Codec
    compressed_size: int
    ratio: float
    encode_time: float
    decode_time: float


@dataclass
class CompressionReport:
    dataset_name: str
    original_size: int
    entries: list[CodecEntry]
    best_codec: Codec
    policy: SelectionPolicy = MIN_SIZE
    gzip_level: int = GZIP_LEVEL
    skipped: list[str] = field(default_factory=list)

    def entry(self, codec: Codec) -> CodecEntry:
        for e in self.entries:
            if e.codec is codec:
                return e
        raise KeyError(codec)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["best_codec"] = self.best_codec.value
        d["policy"] = str(self.policy)
        for e in d["entries"]:
            e["codec"] = e["codec"].value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> CompressionReport:
        return cls(
            dataset_name=d["dataset_name"],
            original_size=d["original_size"],
            entries=[CodecEntry(**{**e, "codec": Codec(e["codec"])}) for e in d["entries"]],
            best_codec=Codec(d["best_codec"]),
            policy=SelectionPolicy.parse(d.get("policy", "minsize")),
            gzip_level=d.get("gzip_level", GZIP_LEVEL),
            skipped=list(d.get("skipped", [])),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def ratio_of(compressed: int, original: int) -> float:
    # empty originals have no meaningful ratio; divide by 1 byte instead of 0
    return compressed / max(original, 1)


def select_codec(report: CompressionReport, policy: SelectionPolicy = MIN_SIZE) -> Codec:
    entries = report.entries
    if not entries:
        raise ValueError("empty report")
    if policy.kind == "minsize":
        key = lambda e: (e.compressed_size, e.codec.rank)  # noqa: E731
    elif policy.kind == "mintime":
        key = lambda e: (e.encode_time, e.codec.rank)  # noqa: E731
    else:
        max_size = max(e.compressed_size for e in entries) or 1
        max_time = max(e.encode_time for e in entries) or 1.0

        def key(e):
            score = policy.alpha * e.compressed_size / max_size
            score += (1 - policy.alpha) * e.encode_time / max_time
            return (score, e.codec.rank)

    return min(entries, key=key).codec


def _measure(files: Sequence[NamedFile], codec: Codec, original: int) -> CodecEntry:
    t0 = time.perf_counter()
    blob = encode(files, codec)
    t1 = time.perf_counter()
    back = decode(blob, codec, names=[f.name for f in files])
    t2 = time.perf_counter()
    if back != list(files):
        raise CorruptStream(f"{codec.value} failed its verification roundtrip")
    return CodecEntry(codec, len(blob), ratio_of(len(blob), original), t1 - t0, t2 - t1)


def benchmark(
    files: Sequence[NamedFile],
    codecs: Iterable[Codec] = ALL_CODECS,
    policy: SelectionPolicy = MIN_SIZE,
    *,
    name: str = "dataset",
    workers: int = 1,
    executor: Executor | None = None,
) -> CompressionReport:
    """Encode ``files`` with every codec, verify each by decoding, and pick one per ``policy``.

    Store is always measured so the selection can fall back to it. Gzip is skipped
    (and listed in ``skipped``) for multi-file inputs.
    """
    files = list(files)
    wanted = sorted(set(codecs), key=lambda c: c.rank)
    if not wanted:
        raise ValueError("no codecs requested")
    if Codec.STORE not in wanted:
        wanted.insert(0, Codec.STORE)
    skipped = [c.value for c in wanted if not applicable(c, files)]
    runnable = [c for c in wanted if applicable(c, files)]
    original = sum(f.size for f in files)

    if executor is not None:
        entries = list(executor.map(lambda c: _measure(files, c, original), runnable))
    elif workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(lambda c: _measure(files, c, original), runnable))
    else:
        entries = [_measure(files, c, original) for c in runnable]

    report = CompressionReport(name, original, entries, Codec.STORE, policy, GZIP_LEVEL, skipped)
    report.best_codec = select_codec(report, policy)
    return report


def format_table(reports: Sequence[CompressionReport], unit: str = "bytes") -> str:
    """Text table with one row per dataset and one size column per codec."""
    scale = {"bytes": 1, "KB": 1e3, "MB": 1e6}[unit]
    codecs = [c for c in ALL_CODECS if any(e.codec is c for r in reports for e in r.entries)]
    head = ["dataset", f"original ({unit})"] + [f".{c.value} ({unit})" for c in codecs] + ["best"]
    rows = []
    for r in reports:
        sizes = {e.codec: e.compressed_size for e in r.entries}
        row = [r.dataset_name, _fmt_size(r.original_size, scale)]
        row += [_fmt_size(sizes[c], scale) if c in sizes else "-" for c in codecs]
        row.append(r.best_codec.value)
        rows.append(row)
    widths = [max(len(str(x)) for x in col) for col in zip(head, *rows)]
    lines = ["  ".join(str(x).ljust(w) for x, w in zip(line, widths)) for line in [head, *rows]]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _fmt_size(n: int, scale: float) -> str:
    return str(n) if scale == 1 else f"{n / scale:.3f}"
