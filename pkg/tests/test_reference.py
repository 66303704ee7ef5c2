from __future__ import annotations

import re
from pathlib import Path

import pytest

from foggis.compression import Codec, encode, gzip_compress
from foggis.reference import (
    GLOBAL_MAP_TABLE,
    MB,
    TOLERANCE,
    Comparison,
    compare,
    compare_directory,
    find_theme_files,
    measure_theme,
    shapefile_rows,
)
from foggis.report import ReportDocument, render_text
from foggis.synth import redundant_corpus

SOURCE = Path(__file__).resolve().parents[1] / "paper.md"
COLUMNS = ("tar.gz", "iso", "zip", "tar", "gzip", "zipx")


def _source_rows() -> dict[tuple[str, str], list[float | None]]:
    rows = {}
    for line in SOURCE.read_text(encoding="utf-8").splitlines():
        cells = line.split("\t")
        m = re.fullmatch(r"(.+?)\s*[-\u2014](Shapefile|Geodatabase)", cells[0])
        if m and len(cells) >= 6:
            rows[(m.group(1), m.group(2).lower())] = [float(c) if c else None for c in cells[1:8]]
    return rows


@pytest.mark.skipif(not SOURCE.exists(), reason="source document not in the workspace")
def test_table_constants_match_source_document():
    src = _source_rows()
    assert len(src) == len(GLOBAL_MAP_TABLE) == 12
    for row in GLOBAL_MAP_TABLE:
        values = src[(row.theme, row.fmt)]
        values += [None] * (7 - len(values))
        assert row.original == values[0]
        assert [row.sizes[c] for c in COLUMNS] == values[1:], row.theme


def test_tolerance_and_comparison():
    assert TOLERANCE == 0.15
    c = Comparison("t", "zip", 10.0, 11.5)
    assert c.within and c.rel_error == pytest.approx(0.15)
    assert not Comparison("t", "zip", 10.0, 11.51).within
    assert Comparison("t", "zip", 10.0, 8.5).within


def test_compare_skips_blank_and_tar_cells():
    pol = next(r for r in shapefile_rows() if r.theme == "Political Boundaries Areas")
    got = compare(pol, {"tar.gz": 33_700_000, "zip": 1, "tar": 5, "gzip": 7})
    assert [c.codec for c in got] == ["tar.gz", "zip"]
    assert got[0].rel_error == 0.0


def test_measure_theme_sizes():
    files = redundant_corpus(1, seed=3)[0][1]
    m = measure_theme(files)
    assert m["original"] == sum(f.size for f in files)
    assert m["tar.gz"] == len(encode(files, Codec.TARGZ))
    assert m["gzip"] == sum(len(gzip_compress(f.data, f.name)) for f in files)


def test_directory_comparison(tmp_path):
    (tmp_path / "sub").mkdir()
    for name in ("coastl.shp", "coastl.dbf", "sub/coastl.shx", "other.shp"):
        (tmp_path / name).write_bytes(b"\x00" * 100 + name.encode())
    coast = shapefile_rows()[0]
    assert [f.name for f in find_theme_files(tmp_path, coast)] == ["coastl.dbf", "coastl.shp", "sub/coastl.shx"]
    results = compare_directory(tmp_path)
    assert {c.theme for c in results} == {"Coast Line"}
    assert all(not c.within for c in results)  # a few hundred bytes is nowhere near 4.9 MB
    assert results[0].measured_mb == measure_theme(find_theme_files(tmp_path, coast))["tar.gz"] / MB


def test_report_lists_reference_rows():
    rows = [Comparison("Coast Line", "tar.gz", 4.9, 5.0).to_dict()]
    doc = ReportDocument.build([], reference=rows, timestamp=False).to_dict()
    text = render_text(doc)
    assert "Coast Line" in text and "ok" in text
    assert ReportDocument.from_dict(doc).reference == rows
