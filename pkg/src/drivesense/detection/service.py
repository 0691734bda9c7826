"""HTTP object-detection service.

``POST /v1/detections`` with ``{"map_png": <base64 PNG>, "meta": {...}}``
answers ``{"frame_id": ..., "detections": [{cls, cx, cy, w, l, yaw, score}]}``.
Only the 8-bit map travels over the wire, never the point cloud.
"""

from __future__ import annotations

import base64
import binascii
import threading

from .._http import HttpError, ServerHandle, call, parse_bind
from ..bevmap import BevMap, from_png, map_metadata, to_png
from ..errors import DetectorFailure, SchemaError, ServiceServerError
from .types import Detection, Detector

DETECTIONS_PATH = "/v1/detections"


def encode_request(bev: BevMap) -> dict:
    return {"map_png": base64.b64encode(to_png(bev)).decode("ascii"), "meta": map_metadata(bev)}


def decode_request(body) -> BevMap:
    if not isinstance(body, dict):
        raise SchemaError("request body must be an object")
    if "map_png" not in body or "meta" not in body or not isinstance(body["meta"], dict):
        raise SchemaError("request needs 'map_png' and a 'meta' object")
    try:
        png = base64.b64decode(body["map_png"], validate=True)
    except (binascii.Error, TypeError, ValueError) as exc:
        raise SchemaError(f"map_png is not base64: {exc}") from None
    try:
        return from_png(png, body["meta"])
    except SchemaError:
        raise
    except Exception as exc:  # PIL raises a zoo of types for bad images
        raise SchemaError(f"cannot decode map: {exc}") from None


def encode_response(frame_id: str, dets: list[Detection]) -> dict:
    return {"frame_id": frame_id, "detections": [d.to_dict() for d in dets]}


def decode_response(obj) -> list[Detection]:
    return [Detection.from_dict(d) for d in obj["detections"]]


class OdsApp:
    """Request router around a single detector; stateless between requests."""

    def __init__(self, detector: Detector):
        self.detector = detector
        self._lock = None if getattr(detector, "thread_safe", False) else threading.Lock()

    def __call__(self, method: str, path: str, body):
        if path.rstrip("/") != DETECTIONS_PATH:
            raise HttpError(404, f"no route {path}")
        if method != "POST":
            raise HttpError(405, f"{method} not allowed on {path}")
        try:
            bev = decode_request(body)
        except SchemaError as exc:
            raise HttpError(400, str(exc)) from None
        if self._lock is None:
            dets = self.detector.detect(bev)
        else:
            with self._lock:
                dets = self.detector.detect(bev)
        return 200, encode_response(bev.frame_id, dets)


def serve_ods(detector: Detector, bind_addr: str | tuple[str, int] = ("127.0.0.1", 0), start: bool = True) -> ServerHandle:
    """Bind the detection service; with ``start`` it runs on a daemon thread."""
    host, port = parse_bind(bind_addr)
    handle = ServerHandle(OdsApp(detector), host, port)
    return handle.start() if start else handle


class OdsClient:
    """Remote detector; also usable wherever a local ``Detector`` is expected."""

    thread_safe = True

    def __init__(self, endpoint: str, timeout: float = 10.0):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout

    def request_detections(self, bev: BevMap) -> list[Detection]:
        try:
            obj = call("POST", self.endpoint + DETECTIONS_PATH, encode_request(bev), self.timeout, frame_id=bev.frame_id)
        except ServiceServerError as exc:
            raise DetectorFailure(str(exc), status=exc.status, frame_id=bev.frame_id) from exc
        return decode_response(obj)

    detect = request_detections


def ods_client(endpoint: str, timeout: float = 10.0) -> OdsClient:
    return OdsClient(endpoint, timeout)
