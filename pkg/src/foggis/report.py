"""Versioned JSON report and the text tables rendered from it.

The JSON document is the single source: :func:`render_text` reads only the dict,
so a stored report re-renders to exactly the same tables. ``generated_at`` is the
only field that varies between identical runs; :func:`stable_view` drops it.
"""

from __future__ import annotations

import json
import platform
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from . import __version__
from .compression import ALL_CODECS, CompressionReport, format_table
from .gateway import TransferModel, simulate_forward

SCHEMA = "foggis.report/1"
TIMESTAMP_FIELD = "generated_at"


class ReportError(ValueError):
    pass


@dataclass
class ReportDocument:
    rows: list[dict]
    transfer: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    reference: list[dict] = field(default_factory=list)
    generated_at: str | None = None
    tool_version: str = __version__
    schema: str = SCHEMA

    @classmethod
    def build(
        cls,
        reports: Sequence[CompressionReport],
        model: TransferModel | None = None,
        *,
        config: dict | None = None,
        notes: Sequence[str] = (),
        reference: Sequence[dict] = (),
        timestamp: bool = True,
    ) -> ReportDocument:
        transfer = []
        if model is not None:
            for r in reports:
                out = simulate_forward(r.dataset_name, r, r.best_codec, model)
                transfer.append({
                    "dataset": r.dataset_name,
                    "codec": out.codec.value,
                    "original_size": r.original_size,
                    "bytes_sent": out.bytes_sent,
                    "raw_time": float(out.raw_time),
                    "simulated_time": float(out.simulated_time),
                    "time_saved": float(out.time_saved),
                    "encode_time": out.encode_time,
                    "net_win": out.net_win,
                })
        env = [f"python {platform.python_version()} on {platform.system().lower()}-{platform.machine()}"]
        return cls(
            rows=[r.to_dict() for r in reports],
            transfer=transfer,
            config={**(config or {}), **({"model": vars(model)} if model else {})},
            notes=env + list(notes),
            reference=list(reference),
            generated_at=datetime.now(timezone.utc).isoformat(timespec="seconds") if timestamp else None,
        )

    def to_dict(self) -> dict:
        return {
            "schema": self.schema,
            "tool_version": self.tool_version,
            TIMESTAMP_FIELD: self.generated_at,
            "config": self.config,
            "rows": self.rows,
            "transfer": self.transfer,
            "reference": self.reference,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def reports(self) -> list[CompressionReport]:
        return [CompressionReport.from_dict(r) for r in self.rows]

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(self.to_json() + "\n")
        return path

    @classmethod
    def from_dict(cls, doc: dict) -> ReportDocument:
        if doc.get("schema") != SCHEMA:
            raise ReportError(f"unsupported report schema {doc.get('schema')!r}")
        return cls(
            rows=doc["rows"],
            transfer=doc.get("transfer", []),
            config=doc.get("config", {}),
            notes=doc.get("notes", []),
            reference=doc.get("reference", []),
            generated_at=doc.get(TIMESTAMP_FIELD),
            tool_version=doc.get("tool_version", "?"),
        )

    @classmethod
    def load(cls, path: str | Path) -> ReportDocument:
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise ReportError(f"{path}: {exc}") from exc


def stable_view(doc: dict) -> dict:
    """The report without its timestamp or anything timing-dependent."""
    out = {k: v for k, v in doc.items() if k != TIMESTAMP_FIELD}
    out["rows"] = [
        {**r, "entries": [{k: v for k, v in e.items() if not k.endswith("_time")} for e in r["entries"]]}
        for r in doc["rows"]
    ]
    out["transfer"] = [{k: v for k, v in t.items() if k not in ("encode_time", "net_win")} for t in doc["transfer"]]
    return out


def _table(head: list[str], rows: list[list]) -> str:
    widths = [max(len(str(x)) for x in col) for col in zip(head, *rows)]
    lines = ["  ".join(str(x).ljust(w) for x, w in zip(line, widths)) for line in [head, *rows]]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def render_text(doc: dict, unit: str = "bytes") -> str:
    reports = [CompressionReport.from_dict(r) for r in doc["rows"]]
    parts = [f"# {doc['schema']} (foggis {doc['tool_version']})"]
    if reports:
        parts.append(format_table(reports, unit))
        ratios = [[r.dataset_name] + [f"{r.entry(c).ratio:.4f}" if any(e.codec is c for e in r.entries) else "-"
                                      for c in ALL_CODECS] for r in reports]
        parts.append(_table(["ratio"] + [f".{c.value}" for c in ALL_CODECS], ratios))
    if doc.get("transfer"):
        rows = [[t["dataset"], t["codec"], t["bytes_sent"], f"{t['raw_time']:.6f}",
                 f"{t['simulated_time']:.6f}", f"{t['time_saved']:.6f}", "yes" if t["net_win"] else "no"]
                for t in doc["transfer"]]
        parts.append(_table(["dataset", "codec", "bytes_sent", "raw_time_s", "time_s", "saved_s", "net_win"], rows))
    if doc.get("reference"):
        rows = [[c["theme"], c["codec"], c["reference_mb"], c["measured_mb"], f"{100 * c['rel_error']:+.1f}%",
                 "ok" if c["within"] else "OUT"] for c in doc["reference"]]
        parts.append(_table(["theme", "codec", "ref_MB", "measured_MB", "delta", "+-15%"], rows))
    if doc.get("notes"):
        parts.append("\n".join(f"note: {n}" for n in doc["notes"]))
    return "\n\n".join(parts) + "\n"
