from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from ..errors import SchemaError


class Point(NamedTuple):
    x: float
    y: float
    z: float
    intensity: float
    ring: int
    vertical_angle: float


def vertical_angles(xyz: np.ndarray) -> np.ndarray:
    """Elevation of each point seen from the sensor origin, in degrees."""
    xyz = np.asarray(xyz, dtype=float).reshape(-1, 3)
    return np.degrees(np.arctan2(xyz[:, 2], np.hypot(xyz[:, 0], xyz[:, 1])))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class PointCloud:
    """One Lidar sweep in the ego frame (x forward, y left, z up).

    Point attributes are stored column-wise in read-only arrays so clouds can be
    shared between threads; every operation returns a new cloud.
    """

    xyz: np.ndarray
    intensity: np.ndarray
    ring: np.ndarray
    vertical_angle: np.ndarray
    timestamp_us: int
    frame_id: str
    _validated: bool = field(default=True, repr=False)

    def __post_init__(self):
        xyz = np.asarray(self.xyz, dtype=np.float64).reshape(-1, 3)
        n = len(xyz)
        intensity = np.asarray(self.intensity, dtype=np.float64).reshape(n)
        ring = np.asarray(self.ring, dtype=np.int64).reshape(n)
        vert = np.asarray(self.vertical_angle, dtype=np.float64).reshape(n)
        if self._validated:
            if not np.all(np.isfinite(xyz)):
                raise SchemaError("point coordinates must be finite")
            if n and (intensity.min() < 0 or intensity.max() > 255):
                raise SchemaError("intensity must lie in [0, 255]")
            if n and ring.min() < 0:
                raise SchemaError("ring index must be >= 0")
            if int(self.timestamp_us) <= 0:
                raise SchemaError("timestamp_us must be strictly positive")
            if not self.frame_id:
                raise SchemaError("frame_id must be non-empty")
        object.__setattr__(self, "xyz", _frozen(xyz))
        object.__setattr__(self, "intensity", _frozen(intensity))
        object.__setattr__(self, "ring", _frozen(ring))
        object.__setattr__(self, "vertical_angle", _frozen(vert))
        object.__setattr__(self, "timestamp_us", int(self.timestamp_us))

    @classmethod
    def from_arrays(
        cls,
        xyz,
        intensity=None,
        ring=None,
        vertical_angle=None,
        *,
        timestamp_us: int,
        frame_id: str,
    ) -> "PointCloud":
        xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
        n = len(xyz)
        if intensity is None:
            intensity = np.zeros(n)
        if ring is None:
            ring = np.zeros(n, dtype=np.int64)
        if vertical_angle is None:
            vertical_angle = vertical_angles(xyz)
        return cls(xyz, intensity, ring, vertical_angle, timestamp_us, frame_id)

    @classmethod
    def from_points(cls, points: Iterable[Point], *, timestamp_us: int, frame_id: str) -> "PointCloud":
        pts = list(points)
        if not pts:
            return cls.empty(timestamp_us=timestamp_us, frame_id=frame_id)
        arr = np.array([p[:4] for p in pts], dtype=np.float64)
        return cls(
            arr[:, :3],
            arr[:, 3],
            np.array([p.ring for p in pts]),
            np.array([p.vertical_angle for p in pts], dtype=np.float64),
            timestamp_us,
            frame_id,
        )

    @classmethod
    def empty(cls, *, timestamp_us: int, frame_id: str) -> "PointCloud":
        return cls(np.zeros((0, 3)), np.zeros(0), np.zeros(0, dtype=np.int64), np.zeros(0), timestamp_us, frame_id)

    def __len__(self) -> int:
        return len(self.xyz)

    @property
    def points(self) -> list[Point]:
        return [
            Point(float(x), float(y), float(z), float(i), int(r), float(v))
            for (x, y, z), i, r, v in zip(self.xyz, self.intensity, self.ring, self.vertical_angle)
        ]

    def select(self, index) -> "PointCloud":
        """Subset by boolean mask or integer index array, preserving order."""
        return PointCloud(
            self.xyz[index],
            self.intensity[index],
            self.ring[index],
            self.vertical_angle[index],
            self.timestamp_us,
            self.frame_id,
            _validated=False,
        )

    def with_xyz(self, xyz: np.ndarray) -> "PointCloud":
        return PointCloud(
            xyz, self.intensity, self.ring, self.vertical_angle, self.timestamp_us, self.frame_id, _validated=False
        )

    def concat(self, other: "PointCloud") -> "PointCloud":
        return PointCloud(
            np.vstack([self.xyz, other.xyz]),
            np.concatenate([self.intensity, other.intensity]),
            np.concatenate([self.ring, other.ring]),
            np.concatenate([self.vertical_angle, other.vertical_angle]),
            self.timestamp_us,
            self.frame_id,
            _validated=False,
        )

    def equals(self, other: "PointCloud", atol: float = 0.0) -> bool:
        if len(self) != len(other) or self.timestamp_us != other.timestamp_us or self.frame_id != other.frame_id:
            return False
        return (
            np.allclose(self.xyz, other.xyz, atol=atol, rtol=0)
            and np.array_equal(self.intensity, other.intensity)
            and np.array_equal(self.ring, other.ring)
            and np.allclose(self.vertical_angle, other.vertical_angle, atol=atol, rtol=0)
        )
