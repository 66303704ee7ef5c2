from __future__ import annotations

import random

import pytest
from hypothesis import given, settings, strategies as st

from foggis.cloud import (
    CloudCorrupt,
    CloudEntry,
    CloudStore,
    IdConflict,
    UnknownId,
    decoded_payload,
)
from foggis.compression import Codec, NamedFile, encode, tar_unpack
from foggis.geodata import BoundingBox


def _entry(i: str, files, codec=Codec.TARGZ, bbox=None, keywords=()):
    return CloudEntry(i, i, codec, encode(files, codec), bbox, tuple(keywords), tuple(f.name for f in files))


def test_store_is_idempotent_and_conflicts(tmp_path):
    cs = CloudStore(tmp_path)
    e = _entry("a", [NamedFile("a.txt", b"hello")], Codec.GZIP)
    assert cs.store(e) == cs.store(e)
    with pytest.raises(IdConflict):
        cs.store(_entry("a", [NamedFile("a.txt", b"other")], Codec.GZIP))
    assert cs.retrieve("a") == e.stored_bytes
    assert cs.retrieve("a", decoded=True) == b"hello"


def test_unknown_id(tmp_path):
    with pytest.raises(UnknownId):
        CloudStore(tmp_path).retrieve("missing")


def test_multi_member_decodes_to_tar(tmp_path):
    cs = CloudStore(tmp_path)
    files = [NamedFile("x.shp", b"1" * 300), NamedFile("x.dbf", b"2" * 40)]
    cs.store(_entry("m", files))
    assert tar_unpack(cs.retrieve("m", decoded=True)) == files
    assert decoded_payload(files) == cs.retrieve("m", decoded=True)


def test_single_file_store_keeps_member_name(tmp_path):
    cs = CloudStore(tmp_path)
    cs.store(_entry("s", [NamedFile("raw.bin", b"\x00\x01")], Codec.STORE))
    assert cs.retrieve_files("s") == [NamedFile("raw.bin", b"\x00\x01")]


def test_tampered_object_is_corrupt(tmp_path):
    cs = CloudStore(tmp_path)
    e = _entry("t", [NamedFile("t", b"payload" * 50)], Codec.GZIP)
    cs.store(e)
    obj = next((tmp_path / "objects").iterdir())
    obj.write_bytes(b"garbage")
    with pytest.raises(CloudCorrupt):
        cs.retrieve("t", decoded=True)


def _brute(entries, bbox, keyword):
    out = []
    for e in entries:
        if bbox is not None and (e.bbox is None or not (
                e.bbox.min_x <= bbox.max_x and bbox.min_x <= e.bbox.max_x
                and e.bbox.min_y <= bbox.max_y and bbox.min_y <= e.bbox.max_y)):
            continue
        if keyword is not None and keyword.lower() not in [k.lower() for k in e.keywords]:
            continue
        out.append(e.id)
    return sorted(out)


def test_hundred_entries_roundtrip_and_catalog(tmp_path):
    rng = random.Random(3)
    cs = CloudStore(tmp_path)
    entries = []
    words = ["coast", "Water", "boundary", "city"]
    for i in range(100):
        files = [NamedFile(f"f{j}", rng.randbytes(rng.randrange(0, 400)) + bytes(rng.randrange(500)))
                 for j in range(rng.randrange(1, 4))]
        codec = rng.choice([Codec.TAR, Codec.TARGZ, Codec.ZIP]) if len(files) > 1 else rng.choice(list(Codec))
        x, y = rng.uniform(0, 100), rng.uniform(0, 100)
        bbox = BoundingBox(x, y, x + rng.uniform(0, 10), y + rng.uniform(0, 10)) if i % 5 else None
        e = _entry(f"id{i:03d}", files, codec, bbox, rng.sample(words, rng.randrange(0, 3)))
        cs.store(e)
        entries.append((e, files))
    reopened = CloudStore(tmp_path)
    for e, files in entries:
        assert reopened.retrieve(e.id) == e.stored_bytes
        assert reopened.retrieve(e.id, decoded=True) == decoded_payload(files)
    es = [e for e, _ in entries]
    for _ in range(40):
        x, y = rng.uniform(-5, 100), rng.uniform(-5, 100)
        q = BoundingBox(x, y, x + rng.uniform(0, 30), y + rng.uniform(0, 30)) if rng.random() < 0.8 else None
        kw = rng.choice(words + [None, "COAST"])
        assert [d["id"] for d in reopened.catalog_search(q, kw)] == _brute(es, q, kw)


@settings(max_examples=40)
@given(st.lists(st.binary(max_size=200), min_size=1, max_size=4), st.sampled_from([Codec.TAR, Codec.TARGZ, Codec.ZIP]))
def test_decode_of_stored_matches_input(tmp_path_factory, blobs, codec):
    cs = CloudStore(tmp_path_factory.mktemp("c"))
    files = [NamedFile(f"m{i}", b) for i, b in enumerate(blobs)]
    cs.store(_entry("x", files, codec))
    assert cs.retrieve_files("x") == files
