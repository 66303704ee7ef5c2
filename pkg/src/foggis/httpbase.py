"""Small helpers shared by the gateway and cloud HTTP servers."""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlsplit

log = logging.getLogger(__name__)


class HttpError(Exception):
    def __init__(self, status: int, error: str, detail: str = ""):
        super().__init__(f"{status} {error}: {detail}")
        self.status = status
        self.error = error
        self.detail = detail


class JsonHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "foggis"

    def log_message(self, fmt, *args):  # route through logging instead of stderr
        log.debug("%s - %s", self.address_string(), fmt % args)

    @property
    def path_parts(self) -> list[str]:
        return [p for p in urlsplit(self.path).path.split("/") if p]

    @property
    def query(self) -> dict[str, str]:
        return {k: v[-1] for k, v in parse_qs(urlsplit(self.path).query).items()}

    def read_body(self) -> bytes:
        length = int(self.headers.get("Content-Length") or 0)
        return self.rfile.read(length) if length else b""

    def read_json(self) -> dict:
        try:
            doc = json.loads(self.read_body() or b"{}")
        except json.JSONDecodeError as exc:
            raise HttpError(400, "BadJson", str(exc)) from exc
        if not isinstance(doc, dict):
            raise HttpError(400, "BadJson", "expected a JSON object")
        return doc

    def send_bytes(self, status: int, body: bytes, content_type: str, headers: dict | None = None):
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        for k, v in (headers or {}).items():
            self.send_header(k, v)
        self.end_headers()
        if self.command != "HEAD":
            self.wfile.write(body)

    def send_json(self, status: int, doc, headers: dict | None = None):
        self.send_bytes(status, json.dumps(doc).encode(), "application/json", headers)

    def send_error_json(self, err: HttpError):
        self.send_json(err.status, {"error": err.error, "detail": err.detail})

    def dispatch(self, method: str):
        try:
            route = getattr(self, f"route_{method}", None)
            if route is None:
                raise HttpError(405, "MethodNotAllowed", method)
            route()
        except HttpError as err:
            self.send_error_json(err)
        except Exception as exc:  # noqa: BLE001 - last-resort 500 keeps the server alive
            log.exception("unhandled error")
            self.send_error_json(HttpError(500, type(exc).__name__, str(exc)))

    def do_GET(self):
        self.dispatch("GET")

    def do_POST(self):
        self.dispatch("POST")

    def do_PUT(self):
        self.dispatch("PUT")


class BackgroundServer:
    """Run a ThreadingHTTPServer on a daemon thread; port 0 picks a free port."""

    def __init__(self, handler_cls, host: str = "127.0.0.1", port: int = 0):
        self.httpd = ThreadingHTTPServer((host, port), handler_cls)
        self.httpd.daemon_threads = True
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> BackgroundServer:
        self.thread.start()
        return self

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        self.thread.join(timeout=5)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
