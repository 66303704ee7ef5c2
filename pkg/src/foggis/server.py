"""HTTP/1.1 REST surface of the gateway.

    POST /datasets                 raw or multipart body -> 201 record summary + report
    GET  /datasets?bbox=...        -> catalog summaries
    GET  /datasets/{id}            -> original bytes (tar when several members)
    GET  /datasets/{id}/compressed -> stored bytes + X-Codec
    POST /overlay                  OverlayRequest JSON -> result JSON or PPM
    POST /forward/{id}             {bandwidth, rtt, energy_per_byte} -> TransferOutcome
    GET  /metrics                  -> GatewayMetrics
"""

from __future__ import annotations

import json
import urllib.parse
from email.parser import BytesParser
from email.policy import HTTP

from .cloud import CloudError, CloudUnavailable, decoded_payload, parse_bbox_param
from .compression import CompressionError, NamedFile, SelectionPolicy
from .geodata import Crs
from .gateway import DuplicateName, Gateway, ParseFailure, TransferModel, UnknownDataset
from .httpbase import BackgroundServer, HttpError, JsonHandler
from .overlay import ImageResult, OverlayError, OverlayRequest, result_to_json


def parse_multipart(content_type: str, body: bytes) -> list[NamedFile]:
    msg = BytesParser(policy=HTTP).parsebytes(
        b"Content-Type: " + content_type.encode("latin-1") + b"\r\n\r\n" + body
    )
    if not msg.is_multipart():
        raise HttpError(400, "BadMultipart", "body is not multipart")
    files = []
    for part in msg.iter_parts():
        name = part.get_filename() or part.get_param("name", header="content-disposition")
        if not name:
            raise HttpError(400, "BadMultipart", "part without a filename")
        files.append(NamedFile(name, part.get_payload(decode=True) or b""))
    return files


def _translate(exc: Exception) -> HttpError:
    if isinstance(exc, UnknownDataset):
        return HttpError(404, "UnknownDataset", str(exc))
    if isinstance(exc, CloudUnavailable):
        return HttpError(502, "CloudUnavailable", str(exc))
    if isinstance(exc, CloudError):
        return HttpError(502, type(exc).__name__, str(exc))
    return HttpError(400, type(exc).__name__, str(exc))


_CLIENT_ERRORS = (ParseFailure, DuplicateName, UnknownDataset, OverlayError, CompressionError,
                  CloudError, ValueError, KeyError, TypeError)


def gateway_handler(gw: Gateway) -> type[JsonHandler]:
    class GatewayHandler(JsonHandler):
        def route_GET(self):
            parts = self.path_parts
            try:
                if parts == ["metrics"]:
                    return self.send_json(200, gw.metrics().to_dict())
                if parts == ["datasets"]:
                    q = self.query
                    bbox = parse_bbox_param(q["bbox"]) if q.get("bbox") else None
                    return self.send_json(200, gw.list_datasets(bbox))
                if len(parts) == 2 and parts[0] == "datasets":
                    files = gw.original_files(urllib.parse.unquote(parts[1]))
                    ctype = "application/octet-stream" if len(files) == 1 else "application/x-tar"
                    return self.send_bytes(200, decoded_payload(files), ctype,
                                           {"X-Members": json.dumps([f.name for f in files])})
                if len(parts) == 3 and parts[0] == "datasets" and parts[2] == "compressed":
                    rec = gw.get(urllib.parse.unquote(parts[1]))
                    return self.send_bytes(200, rec.compressed_bytes, "application/octet-stream",
                                           {"X-Codec": rec.codec.value})
            except _CLIENT_ERRORS as exc:
                raise _translate(exc) from exc
            raise HttpError(404, "NotFound", self.path)

        def route_POST(self):
            parts = self.path_parts
            try:
                if parts == ["datasets"]:
                    return self._ingest()
                if parts == ["overlay"]:
                    request = OverlayRequest.from_json(self.read_json())
                    result = gw.analyze(request)
                    if isinstance(result, ImageResult):
                        return self.send_bytes(200, result.data, result.media_type)
                    return self.send_json(200, result_to_json(result))
                if len(parts) == 2 and parts[0] == "forward":
                    doc = self.read_json()
                    base = gw.default_model()
                    model = TransferModel(
                        float(doc.get("bandwidth", base.bandwidth)),
                        float(doc.get("rtt", base.rtt)),
                        float(doc.get("energy_per_byte", base.energy_per_byte)),
                    )
                    outcome = gw.forward(urllib.parse.unquote(parts[1]), model)
                    return self.send_json(200, outcome.to_dict())
            except _CLIENT_ERRORS as exc:
                raise _translate(exc) from exc
            raise HttpError(404, "NotFound", self.path)

        def _ingest(self):
            name = self.headers.get("X-Dataset-Name")
            kind = (self.headers.get("X-Dataset-Kind") or "blob").lower()
            if not name:
                raise HttpError(400, "MissingHeader", "X-Dataset-Name is required")
            q = self.query
            policy = SelectionPolicy.parse(q["policy"]) if q.get("policy") else None
            crs_text = q.get("crs") or self.headers.get("X-Dataset-Crs")
            crs = Crs(int(crs_text.upper().removeprefix("EPSG:"))) if crs_text else None
            body = self.read_body()
            ctype = self.headers.get("Content-Type", "")
            if ctype.startswith("multipart/"):
                files = parse_multipart(ctype, body)
            else:
                files = [NamedFile(self.headers.get("X-File-Name") or name, body)]
            rec = gw.ingest(name, kind, files, policy, crs=crs)
            doc = rec.summary()
            doc["report"] = rec.report.to_dict()
            self.send_json(201, doc)

    return GatewayHandler


def serve_gateway(gw: Gateway, host: str | None = None, port: int | None = None) -> BackgroundServer:
    host = gw.config.host if host is None else host
    port = gw.config.port if port is None else port
    return BackgroundServer(gateway_handler(gw), host, port)
