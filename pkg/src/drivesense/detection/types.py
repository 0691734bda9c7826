from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

from ..bevmap import BevMap
from ..errors import DomainError, SchemaError
from ..geometry import OrientedBox

CLASSES = ("car", "van", "truck")


@dataclass(frozen=True)
class Detection:
    box: OrientedBox
    cls: str = "car"
    score: float = 1.0

    def __post_init__(self):
        if self.cls not in CLASSES:
            raise DomainError(f"unknown class {self.cls!r}, expected one of {CLASSES}")
        if not (0.0 <= self.score <= 1.0) or math.isnan(self.score):
            raise DomainError(f"score {self.score} outside [0, 1]")

    def to_dict(self) -> dict:
        b = self.box
        return {"cls": self.cls, "cx": b.cx, "cy": b.cy, "w": b.w, "l": b.l, "yaw": b.yaw, "score": self.score}

    @classmethod
    def from_dict(cls, d: dict) -> "Detection":
        try:
            box = OrientedBox(float(d["cx"]), float(d["cy"]), float(d["w"]), float(d["l"]), float(d.get("yaw", 0.0)))
            return cls(box, str(d.get("cls", "car")), float(d.get("score", 1.0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad detection record {d!r}: {exc}") from None


@runtime_checkable
class Detector(Protocol):
    """Anything that turns a top-view map into detections in that map's frame.

    Set ``thread_safe = False`` on implementations that must not be called
    concurrently; the detection service then serialises access.
    """

    def detect(self, bev: BevMap) -> list[Detection]: ...
