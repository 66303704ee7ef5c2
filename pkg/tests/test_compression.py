from __future__ import annotations

import io
import os
import shutil
import struct
import subprocess
import tarfile
import zlib

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from foggis.compression import (
    ALL_CODECS,
    MIN_ENCODE_TIME,
    MIN_SIZE,
    Codec,
    CodecEntry,
    CompressionError,
    CompressionReport,
    CorruptStream,
    EmptyInput,
    InvalidMemberName,
    MultiFileGzip,
    NamedFile,
    SelectionPolicy,
    UnknownFormat,
    benchmark,
    decode,
    encode,
    format_table,
    gzip_compress,
    gzip_decompress,
    select_codec,
)

needs_gzip = pytest.mark.skipif(shutil.which("gzip") is None, reason="gzip binary not installed")
needs_tar = pytest.mark.skipif(shutil.which("tar") is None, reason="tar binary not installed")

names = st.text("abcdefgh_0123456789", min_size=1, max_size=12)
files_st = st.lists(st.builds(NamedFile, names, st.binary(max_size=3000)), min_size=1, max_size=5,
                    unique_by=lambda f: f.name)


def _roundtrip(files, codec):
    return decode(encode(files, codec), codec, names=[f.name for f in files])


@given(files_st, st.sampled_from(ALL_CODECS))
def test_roundtrip(files, codec):
    if codec is Codec.GZIP:
        files = files[:1]
    assert _roundtrip(files, codec) == files


@given(files_st, st.sampled_from(ALL_CODECS))
def test_encode_is_deterministic(files, codec):
    if codec is Codec.GZIP:
        files = files[:1]
    assert encode(files, codec) == encode(list(files), codec)


def test_empty_file_gzip():
    blob = encode([NamedFile("empty", b"")], Codec.GZIP)
    assert decode(blob, Codec.GZIP) == [NamedFile("empty", b"")]


def test_errors():
    with pytest.raises(EmptyInput):
        encode([], Codec.TAR)
    with pytest.raises(MultiFileGzip):
        encode([NamedFile("a", b"1"), NamedFile("b", b"2")], Codec.GZIP)
    for bad in ("", "/abs", "a/../b", ".."):
        with pytest.raises(InvalidMemberName):
            NamedFile(bad, b"")
    with pytest.raises(UnknownFormat):
        decode(b"PK\x03\x04", Codec.GZIP)
    with pytest.raises(UnknownFormat):
        decode(b"\x1f\x8b" + bytes(30), Codec.ZIP)


def test_flipped_payload_bit_is_corrupt_stream():
    data = os.urandom(4096)
    blob = gzip_compress(data, "x")
    body = range(12, len(blob) - 8)
    for pos in (body[len(body) // 4], body[len(body) // 2], body[3 * len(body) // 4]):
        mutated = bytearray(blob)
        mutated[pos] ^= 0x10
        with pytest.raises(CorruptStream):
            gzip_decompress(bytes(mutated))
    mutated = bytearray(blob)
    mutated[-8] ^= 0x80  # the stored CRC itself
    with pytest.raises(CorruptStream, match="CRC32"):
        gzip_decompress(bytes(mutated))


def test_every_single_bit_flip_is_caught_or_harmless():
    # inside a zero run a flipped match distance still copies zeros, and bits after the
    # end-of-block code are padding: those flips decode to the same bytes, which is fine
    data = os.urandom(2048) + bytes(2048)
    blob = gzip_compress(data, "x")
    caught = 0
    for pos in range(10, len(blob)):
        for bit in range(8):
            mutated = bytearray(blob)
            mutated[pos] ^= 1 << bit
            try:
                _, out = gzip_decompress(bytes(mutated))
            except CompressionError:
                caught += 1
            else:
                assert out == data
    assert caught > 0.95 * 8 * (len(blob) - 10)


@needs_gzip
def test_zero_mib_gzip_vs_reference_tool(tmp_path):
    zeros = bytes(1 << 20)
    ours = encode([NamedFile("zeros.bin", zeros)], Codec.GZIP)
    assert len(ours) < 2048
    (tmp_path / "zeros.bin").write_bytes(zeros)
    ref = subprocess.run(["gzip", "-6", "-n", "-c", str(tmp_path / "zeros.bin")], capture_output=True, check=True).stdout
    assert len(ref) < 2048
    # the deflate payload sizes agree to within the header difference (FNAME, flags)
    assert abs(len(ours) - len(ref)) <= len("zeros.bin") + 1
    # each side reads the other's stream
    assert gzip_decompress(ref)[1] == zeros
    (tmp_path / "ours.gz").write_bytes(ours)
    out = subprocess.run(["gzip", "-d", "-c", str(tmp_path / "ours.gz")], capture_output=True, check=True).stdout
    assert out == zeros
    subprocess.run(["gzip", "-t", str(tmp_path / "ours.gz")], check=True)


@needs_tar
def test_tar_is_ustar_and_listed_by_gnu_tar(tmp_path):
    files = [NamedFile("a.shp", b"x" * 700), NamedFile("dir/b.dbf", b""), NamedFile("c.prj", b"WKT")]
    blob = encode(files, Codec.TAR)
    assert len(blob) % 512 == 0
    assert blob[257:263] == b"ustar\x00" and blob[263:265] == b"00"
    assert blob[-1024:] == bytes(1024)
    (tmp_path / "t.tar").write_bytes(blob)
    listing = subprocess.run(["tar", "-tvf", str(tmp_path / "t.tar")], capture_output=True, text=True, check=True).stdout
    rows = [line.split() for line in listing.strip().splitlines()]
    assert [r[-1] for r in rows] == ["a.shp", "dir/b.dbf", "c.prj"]
    assert [int(r[2]) for r in rows] == [700, 0, 3]
    assert all(r[0] == "-rw-r--r--" for r in rows)
    with tarfile.open(tmp_path / "t.tar") as tf:
        assert [m.mtime for m in tf] == [0, 0, 0]


@needs_tar
def test_decode_targz_made_by_gnu_tar(tmp_path):
    src = tmp_path / "src"
    src.mkdir()
    payload = {"one.txt": b"hello\n" * 50, "two.bin": bytes(range(256)) * 4}
    for n, d in payload.items():
        (src / n).write_bytes(d)
    subprocess.run(["tar", "--format=ustar", "-czf", str(tmp_path / "x.tar.gz"), "-C", str(src), *payload], check=True)
    got = decode((tmp_path / "x.tar.gz").read_bytes(), Codec.TARGZ)
    assert {f.name: f.data for f in got} == payload


def _raw_deflate(data: bytes) -> bytes:
    co = zlib.compressobj(9, zlib.DEFLATED, -15)
    return co.compress(data) + co.flush()


def hand_built_zip(entries: list[tuple[str, bytes, str]]) -> bytes:
    """Zip assembled byte-for-byte from the APPNOTE layout, independent of :mod:`zipfile`.

    ``mode`` is "stored", "deflated" or "descriptor" (deflated, sizes in a trailing data descriptor).
    """
    out, central = bytearray(), bytearray()
    for name, data, mode in entries:
        crc = zlib.crc32(data)
        body = data if mode == "stored" else _raw_deflate(data)
        method = 0 if mode == "stored" else 8
        flag = 0x08 if mode == "descriptor" else 0
        offset = len(out)
        fields = (0, 0, 0) if mode == "descriptor" else (crc, len(body), len(data))
        out += struct.pack("<IHHHHHIIIHH", 0x04034B50, 20, flag, method, 0x6000, 0x5A21, *fields, len(name), 0)
        out += name.encode() + body
        if mode == "descriptor":
            out += struct.pack("<IIII", 0x08074B50, crc, len(body), len(data))
        central += struct.pack("<IHHHHHHIIIHHHHHII", 0x02014B50, 0x0314, 20, flag, method, 0x6000, 0x5A21,
                               crc, len(body), len(data), len(name), 0, 0, 0, 0, 0o100644 << 16, offset)
        central += name.encode()
    cd_offset = len(out)
    out += central
    out += struct.pack("<IHHHHIIH", 0x06054B50, 0, 0, len(entries), len(entries), len(central), cd_offset, 0)
    return bytes(out)


def test_external_zip_with_three_files():
    known = [
        ("readme.txt", b"three known files\n" * 20, "deflated"),
        ("data/coast.shp", bytes(range(256)) * 40, "descriptor"),
        ("empty.dbf", b"", "stored"),
    ]
    got = decode(hand_built_zip(known), Codec.ZIP)
    assert [(f.name, f.data) for f in got] == [(n, d) for n, d, _ in known]


def test_zip_is_readable_by_stdlib_reader():
    import zipfile

    files = [NamedFile("a.txt", b"alpha" * 100), NamedFile("sub/b.bin", os.urandom(300))]
    with zipfile.ZipFile(io.BytesIO(encode(files, Codec.ZIP))) as zf:
        assert zf.testzip() is None
        assert [(i.filename, zf.read(i)) for i in zf.infolist()] == [(f.name, f.data) for f in files]
        assert all(i.date_time == (1980, 1, 1, 0, 0, 0) for i in zf.infolist())


@pytest.mark.parametrize("codec", [Codec.TAR, Codec.TARGZ, Codec.ZIP, Codec.STORE])
def test_truncation_never_returns_wrong_data(codec):
    files = [NamedFile("a", b"a" * 5000), NamedFile("b", os.urandom(2000))]
    blob = encode(files, codec)
    for cut in range(0, len(blob), max(1, len(blob) // 97)):
        try:
            got = decode(blob[:cut], codec, names=["a", "b"])
        except CompressionError:
            continue
        pytest.fail(f"cut at {cut} decoded to {len(got)} members without an error")


@settings(max_examples=60)
@given(st.binary(min_size=1, max_size=5000))
def test_gzip_ratio_monotonic_under_self_concatenation(data):
    one = len(encode([NamedFile("f", data)], Codec.GZIP)) / len(data)
    two = len(encode([NamedFile("f", data + data)], Codec.GZIP)) / (2 * len(data))
    assert two <= one + 0.01


# --- benchmark and selection ----------------------------------------------------------


def test_single_byte_store_only():
    r = benchmark([NamedFile("b", b"x")], [Codec.STORE])
    assert [e.codec for e in r.entries] == [Codec.STORE]
    assert r.entries[0].ratio == 1.0
    assert r.best_codec is Codec.STORE


def _report(sizes: dict[Codec, int], times: dict[Codec, float] | None = None) -> CompressionReport:
    times = times or {}
    entries = [CodecEntry(c, s, s / 100, times.get(c, 0.0), 0.0) for c, s in sizes.items()]
    return CompressionReport("r", 100, entries, Codec.STORE)


def test_select_codec_examples():
    assert select_codec(_report({Codec.STORE: 100, Codec.GZIP: 40}), MIN_SIZE) is Codec.GZIP
    assert select_codec(_report({c: 50 for c in reversed(ALL_CODECS)}), MIN_SIZE) is Codec.STORE
    r = _report({Codec.STORE: 100, Codec.ZIP: 40}, {Codec.STORE: 0.001, Codec.ZIP: 0.5})
    assert select_codec(r, MIN_ENCODE_TIME) is Codec.STORE
    assert select_codec(r, SelectionPolicy("weighted", 1.0)) is Codec.ZIP
    assert select_codec(r, SelectionPolicy("weighted", 0.0)) is Codec.STORE


def test_incompressible_bytes_choose_store():
    r = benchmark([NamedFile("rand", os.urandom(1 << 20))])
    sizes = {e.codec: e.compressed_size for e in r.entries}
    assert all(sizes[c] > sizes[Codec.STORE] for c in sizes if c is not Codec.STORE)
    assert r.best_codec is Codec.STORE


@settings(max_examples=40)
@given(files_st, st.sampled_from(["minsize", "mintime", "weighted:0.3"]))
def test_selection_invariants(files, policy_text):
    policy = SelectionPolicy.parse(policy_text)
    r = benchmark(files, ALL_CODECS, policy)
    assert any(e.codec is Codec.STORE for e in r.entries)
    for e in r.entries:
        assert e.ratio == e.compressed_size / max(r.original_size, 1)
    if policy.kind == "minsize":
        best = r.entry(r.best_codec).compressed_size
        assert best == min(e.compressed_size for e in r.entries)
        overhead = 0 if len(files) == 1 else 12 + sum(10 + len(f.name.encode()) for f in files)
        assert best <= r.original_size + overhead
    assert ("gzip" in r.skipped) == (len(files) > 1)


def test_benchmark_order_is_deterministic_under_parallelism():
    files = [NamedFile("a", b"abc" * 1000), NamedFile("b", b"xyz" * 500)]
    serial = benchmark(files, ALL_CODECS, workers=1)
    parallel = benchmark(files, list(reversed(ALL_CODECS)), workers=4)
    assert [e.codec for e in serial.entries] == [e.codec for e in parallel.entries]
    assert [e.compressed_size for e in serial.entries] == [e.compressed_size for e in parallel.entries]


def test_report_json_roundtrip_and_table():
    r = benchmark([NamedFile("a.txt", b"hello " * 300)], name="hello")
    again = CompressionReport.from_dict(r.to_dict())
    assert again == r
    table = format_table([r])
    assert "hello" in table and ".tar.gz" in table and table.splitlines()[2].split()[-1] == r.best_codec.value


def test_policy_parse():
    assert SelectionPolicy.parse("weighted:0.25") == SelectionPolicy("weighted", 0.25)
    assert str(SelectionPolicy.parse("MinSize".replace("S", "s"))) == "minsize"
    with pytest.raises(ValueError):
        SelectionPolicy("weighted", 1.5)
    with pytest.raises(ValueError):
        Codec.parse("zipx")
