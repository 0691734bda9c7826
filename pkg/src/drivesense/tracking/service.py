"""HTTP multi-object tracking service.

    POST   /v1/sessions               TrackerConfig fields  -> {"session_id": ...}
    POST   /v1/sessions/{id}/frames   Frame of detections   -> Frame of tracked boxes
    DELETE /v1/sessions/{id}                                -> {"closed": id}

Frames posted to one session are processed one at a time; a frame that does not
advance the session clock is answered with 409.
"""

from __future__ import annotations

import itertools
import threading

from .._http import HttpError, ServerHandle, call, parse_bind
from ..errors import ConfigError, OrderingError, SchemaError, SessionNotFound
from .tracker import Frame, TrackerConfig, TrackerSession, update_frame

SESSIONS_PATH = "/v1/sessions"


class SessionRegistry:
    """Thread-safe map of independent tracker sessions."""

    def __init__(self):
        self._sessions: dict[str, TrackerSession] = {}
        self._lock = threading.Lock()
        self._ids = itertools.count(1)

    def create(self, config: TrackerConfig | None = None) -> str:
        with self._lock:
            sid = f"s{next(self._ids)}"
            self._sessions[sid] = TrackerSession(config or TrackerConfig())
        return sid

    def get(self, session_id: str) -> TrackerSession:
        with self._lock:
            try:
                return self._sessions[session_id]
            except KeyError:
                raise SessionNotFound(f"unknown session {session_id!r}") from None

    def post(self, session_id: str, frame: Frame) -> Frame:
        return update_frame(self.get(session_id), frame)

    def close(self, session_id: str) -> None:
        with self._lock:
            if self._sessions.pop(session_id, None) is None:
                raise SessionNotFound(f"unknown session {session_id!r}")

    def __len__(self) -> int:
        return len(self._sessions)


class MotsApp:
    def __init__(self, registry: SessionRegistry | None = None):
        self.registry = registry or SessionRegistry()

    def __call__(self, method: str, path: str, body):
        parts = [p for p in path.split("/") if p]
        if parts[:2] != ["v1", "sessions"]:
            raise HttpError(404, f"no route {path}")
        try:
            if len(parts) == 2 and method == "POST":
                cfg = TrackerConfig.from_dict(body if body is not None else {})
                return 201, {"session_id": self.registry.create(cfg)}
            if len(parts) == 4 and parts[3] == "frames" and method == "POST":
                frame = Frame.from_dict(body)
                out = self.registry.post(parts[2], frame)
                return 200, out.to_dict()
            if len(parts) == 3 and method == "DELETE":
                self.registry.close(parts[2])
                return 200, {"closed": parts[2]}
        except SessionNotFound as exc:
            raise HttpError(404, str(exc)) from None
        except OrderingError as exc:
            raise HttpError(409, str(exc)) from None
        except (SchemaError, ConfigError, TypeError) as exc:
            raise HttpError(400, str(exc)) from None
        raise HttpError(405 if len(parts) <= 4 else 404, f"{method} not supported on {path}")


def serve_mots(bind_addr: str | tuple[str, int] = ("127.0.0.1", 0), start: bool = True) -> ServerHandle:
    host, port = parse_bind(bind_addr)
    handle = ServerHandle(MotsApp(), host, port)
    return handle.start() if start else handle


class MotsClient:
    def __init__(self, endpoint: str, timeout: float = 10.0):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout

    def create_session(self, config: TrackerConfig | None = None) -> str:
        cfg = config or TrackerConfig()
        body = {k: getattr(cfg, k) for k in cfg.__dataclass_fields__}
        return call("POST", self.endpoint + SESSIONS_PATH, body, self.timeout)["session_id"]

    def post_frame(self, session_id: str, frame: Frame) -> Frame:
        obj = call(
            "POST", f"{self.endpoint}{SESSIONS_PATH}/{session_id}/frames", frame.to_dict(), self.timeout, frame.frame_id
        )
        return Frame.from_dict(obj, tracked=True)

    def close_session(self, session_id: str) -> None:
        call("DELETE", f"{self.endpoint}{SESSIONS_PATH}/{session_id}", None, self.timeout)


def mots_client(endpoint: str, timeout: float = 10.0) -> MotsClient:
    return MotsClient(endpoint, timeout)
