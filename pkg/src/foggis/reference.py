"""Published Global Map compression sizes and a tolerance check against local measurements.

Sizes are megabytes (10**6 bytes). ``None`` marks a cell the source left blank.
Only the shapefile rows are comparable here since geodatabases are not parsed.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .compression import Codec, NamedFile, encode, gzip_compress

MB = 1_000_000
TOLERANCE = 0.15

# codec columns we can measure; .iso and .zipx have no local encoder
COMPARED = ("tar.gz", "zip", "gzip")


@dataclass(frozen=True)
class ReferenceRow:
    theme: str
    stems: tuple[str, ...]  # Global Map layer file stems that make up the theme
    fmt: str
    original: float
    sizes: dict[str, float | None]


def _row(theme, stems, fmt, original, targz, iso, zip_, tar, gz, zipx) -> ReferenceRow:
    return ReferenceRow(theme, stems, fmt, original,
                        {"tar.gz": targz, "iso": iso, "zip": zip_, "tar": tar, "gzip": gz, "zipx": zipx})


GLOBAL_MAP_TABLE: tuple[ReferenceRow, ...] = (
    _row("Coast Line", ("coastl",), "shapefile", 6.7, 4.9, 5.2, 5.1, 6.2, 5.8, 5.6),
    _row("Coast Line", ("coastl",), "geodatabase", 3.2, 2.7, 2.9, 3.2, 3.4, 3.4, 3.6),
    # four values only in this row; read left to right as tar.gz, iso, zip, tar
    _row("Political Boundaries Areas", ("polbnda",), "shapefile", 47.3, 33.7, 33.6, 33.4, 32.8, None, None),
    _row("Political Boundaries Areas", ("polbnda",), "geodatabase", 19.7, 17.3, 16.4, 16.2, 16.0, 15.8, 15.6),
    _row("Political Boundaries Lines", ("polbndl",), "shapefile", 47.5, 19.6, 24.5, 25.2, 24.6, 24.4, 26.2),
    _row("Political Boundaries Lines", ("polbndl",), "geodatabase", 21.0, 10.5, 12.7, 11.8, 13.9, 14.6, 14.4),
    _row("Canals and Aqueducts", ("aquecanl",), "shapefile", 2.1, 1.1, 1.2, 1.5, 1.7, 1.8, 1.9),
    _row("Canals and Aqueducts", ("aquecanl",), "geodatabase", 1.5, 0.932, 0.942, 0.938, 0.936, 0.939, 0.942),
    _row("Inland Water Areas", ("inwatera",), "shapefile", 49.1, 33.2, 36.2, 34.6, 35.3, 34.4, 36.4),
    _row("Inland Water Areas", ("inwatera",), "geodatabase", 20.5, 18.2, 18.4, 18.6, 18.8, 19.2, 19.0),
    _row("Water Courses", ("watrcrsl",), "shapefile", 345.7, 330.7, 332.7, 333.7, 331.7, 333.8, 333.2),
    _row("Water Courses", ("watrcrsl",), "geodatabase", 163.9, 105.1, 111.9, 110.4, 110.6, 110.2, 111.8),
)

TAR_NOTE = (
    "Reference .tar sizes are below the original sizes (e.g. 47.3 -> 32.8 MB), which an "
    "uncompressed tar cannot produce; tar cells are excluded from the comparison and plain tar "
    "is measured as aggregation with header overhead."
)


def shapefile_rows() -> list[ReferenceRow]:
    return [r for r in GLOBAL_MAP_TABLE if r.fmt == "shapefile"]


@dataclass(frozen=True)
class Comparison:
    theme: str
    codec: str
    reference_mb: float
    measured_mb: float

    @property
    def rel_error(self) -> float:
        return (self.measured_mb - self.reference_mb) / self.reference_mb

    @property
    def within(self) -> bool:
        return abs(self.rel_error) <= TOLERANCE

    def to_dict(self) -> dict:
        return {"theme": self.theme, "codec": self.codec, "reference_mb": self.reference_mb,
                "measured_mb": round(self.measured_mb, 4), "rel_error": round(self.rel_error, 4),
                "within": self.within}


def measure_theme(files: Sequence[NamedFile]) -> dict[str, int]:
    """Sizes in bytes for the comparable codecs. ``gzip`` compresses each file on its own
    and sums the members, which is how a single-file tool handles a multi-file set."""
    return {
        "original": sum(f.size for f in files),
        "tar.gz": len(encode(files, Codec.TARGZ)),
        "zip": len(encode(files, Codec.ZIP)),
        "tar": len(encode(files, Codec.TAR)),
        "gzip": sum(len(gzip_compress(f.data, f.name)) for f in files),
    }


def compare(row: ReferenceRow, measured: dict[str, int]) -> list[Comparison]:
    out = []
    for codec in COMPARED:
        ref = row.sizes.get(codec)
        if ref is not None and codec in measured:
            out.append(Comparison(row.theme, codec, ref, measured[codec] / MB))
    return out


def find_theme_files(root: str | Path, row: ReferenceRow) -> list[NamedFile]:
    """All files under ``root`` whose stem is one of the row's layer stems (any extension)."""
    root = Path(root)
    hits = sorted(p for p in root.rglob("*") if p.is_file() and p.name.split(".")[0].lower() in row.stems)
    return [NamedFile(p.relative_to(root).as_posix(), p.read_bytes()) for p in hits]


def compare_directory(root: str | Path) -> list[Comparison]:
    out = []
    for row in shapefile_rows():
        files = find_theme_files(root, row)
        if files:
            out += compare(row, measure_theme(files))
    return out
