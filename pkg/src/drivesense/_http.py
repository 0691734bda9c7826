"""Minimal JSON-over-HTTP plumbing shared by the detection and tracking services."""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Callable

import requests

from .errors import (
    ServiceClientError,
    ServiceConflict,
    ServiceError,
    ServiceNotFound,
    ServiceServerError,
    ServiceTimeout,
    ServiceUnavailable,
)

log = logging.getLogger(__name__)

MAX_BODY = 64 * 1024 * 1024


class HttpError(Exception):
    def __init__(self, status: int, message: str):
        self.status = status
        super().__init__(message)


# (method, path, parsed json body or None) -> (status, json object)
Router = Callable[[str, str, Any], "tuple[int, Any]"]


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server: "_Server"

    def log_message(self, fmt, *args):
        log.debug("%s - %s", self.address_string(), fmt % args)

    def _dispatch(self, method: str):
        try:
            length = int(self.headers.get("Content-Length") or 0)
            if length > MAX_BODY:
                raise HttpError(413, "payload too large")
            raw = self.rfile.read(length) if length else b""
            body = None
            if raw:
                try:
                    body = json.loads(raw)
                except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                    raise HttpError(400, f"body is not valid JSON: {exc}") from None
            status, obj = self.server.router(method, self.path, body)
        except HttpError as exc:
            status, obj = exc.status, {"error": str(exc)}
        except Exception as exc:  # noqa: BLE001 - every failure must reach the client as a 500
            log.exception("unhandled error serving %s %s", method, self.path)
            status, obj = 500, {"error": f"{type(exc).__name__}: {exc}"}
        payload = json.dumps(obj, allow_nan=False).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_DELETE(self):
        self._dispatch("DELETE")


class _Server(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, addr, router: Router):
        super().__init__(addr, _Handler)
        self.router = router


class ServerHandle:
    """A service bound to a socket; ``start()`` serves from a background thread."""

    def __init__(self, router: Router, host: str = "127.0.0.1", port: int = 0):
        self._server = _Server((host, port), router)
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        host, port = self._server.server_address[:2]
        return host, port

    @property
    def url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def start(self) -> "ServerHandle":
        self._thread = threading.Thread(target=self._server.serve_forever, name=f"http-{self.address[1]}", daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def close(self) -> None:
        if self._thread is not None:
            self._server.shutdown()
            self._thread.join()
            self._thread = None
        self._server.server_close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def parse_bind(bind_addr: str | tuple[str, int]) -> tuple[str, int]:
    if isinstance(bind_addr, tuple):
        return bind_addr
    host, _, port = bind_addr.rpartition(":")
    return host or "127.0.0.1", int(port)


def call(method: str, url: str, body: Any = None, timeout: float = 10.0, frame_id: str | None = None) -> Any:
    """Issue a JSON request and translate failures into the ServiceError family."""
    try:
        resp = requests.request(method, url, json=body, timeout=timeout)
    except requests.Timeout as exc:
        raise ServiceTimeout(f"{method} {url} timed out after {timeout}s", frame_id=frame_id) from exc
    except requests.ConnectionError as exc:
        raise ServiceUnavailable(f"cannot reach {url}: {exc}", frame_id=frame_id) from exc
    try:
        obj = resp.json()
    except ValueError:
        obj = {"error": resp.text}
    if resp.status_code < 400:
        return obj
    message = obj.get("error", resp.reason) if isinstance(obj, dict) else resp.reason
    status = resp.status_code
    if status == 404:
        cls = ServiceNotFound
    elif status == 409:
        cls = ServiceConflict
    elif status < 500:
        cls = ServiceClientError
    else:
        cls = ServiceServerError
    raise cls(f"{status}: {message}", status=status, frame_id=frame_id)


__all__ = ["HttpError", "ServerHandle", "ServiceError", "call", "parse_bind"]
