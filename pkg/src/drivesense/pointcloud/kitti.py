"""KITTI object labels and the vehicle-only label filter used for Puck-like data."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ParseError, SchemaError
from .cloud import PointCloud

VEHICLE_TYPES = frozenset({"car", "van", "truck"})

# Nominal KITTI axes swap: cam x = -velo y, cam y = -velo z, cam z = velo x.
DEFAULT_VELO_TO_CAM = np.array(
    [
        [0.0, -1.0, 0.0, 0.0],
        [0.0, 0.0, -1.0, 0.0],
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
)


@dataclass(frozen=True)
class KittiLabel:
    """One object line of a KITTI label file.

    ``location`` is the bottom centre of the box in camera coordinates and
    ``dimensions`` are (h, w, l), both in meters.
    """

    object_type: str
    truncated: float
    occluded: int
    alpha: float
    bbox2d: tuple[float, float, float, float]
    dimensions: tuple[float, float, float]
    location: tuple[float, float, float]
    rotation_y: float
    score: float | None = None

    def __post_init__(self):
        if not all(d > 0 for d in self.dimensions):
            raise SchemaError(f"{self.object_type}: box dimensions must be positive")

    def to_line(self) -> str:
        fields = [
            self.object_type,
            f"{self.truncated:.2f}",
            str(int(self.occluded)),
            f"{self.alpha:.2f}",
            *(f"{v:.2f}" for v in self.bbox2d),
            *(f"{v:.2f}" for v in self.dimensions),
            *(f"{v:.2f}" for v in self.location),
            f"{self.rotation_y:.2f}",
        ]
        if self.score is not None:
            fields.append(f"{self.score:.4f}")
        return " ".join(fields)

    def points_inside(self, cam_xyz: np.ndarray) -> np.ndarray:
        """Mask of camera-frame points inside the 3D box."""
        h, w, l = self.dimensions
        d = np.asarray(cam_xyz, dtype=float) - np.asarray(self.location)
        c, s = math.cos(self.rotation_y), math.sin(self.rotation_y)
        # inverse of rotation about the camera y axis
        u = c * d[:, 0] - s * d[:, 2]
        v = s * d[:, 0] + c * d[:, 2]
        return (np.abs(u) <= l / 2) & (np.abs(v) <= w / 2) & (d[:, 1] <= 0) & (d[:, 1] >= -h)


def parse_kitti_labels(text: str) -> list[KittiLabel]:
    labels = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) not in (15, 16):
            raise ParseError(f"expected 15 or 16 fields, got {len(parts)}", line=lineno)
        try:
            vals = [float(p) for p in parts[1:]]
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from None
        try:
            labels.append(
                KittiLabel(
                    object_type=parts[0],
                    truncated=vals[0],
                    occluded=int(vals[1]),
                    alpha=vals[2],
                    bbox2d=tuple(vals[3:7]),
                    dimensions=tuple(vals[7:10]),
                    location=tuple(vals[10:13]),
                    rotation_y=vals[13],
                    score=vals[14] if len(vals) == 15 else None,
                )
            )
        except SchemaError as exc:
            raise SchemaError(str(exc), line=lineno) from None
    return labels


def read_kitti_calib(text: str) -> np.ndarray:
    """4x4 transform taking Velodyne points into the rectified camera frame."""
    entries = {}
    for line in text.splitlines():
        if ":" not in line:
            continue
        key, _, rest = line.partition(":")
        entries[key.strip()] = np.array([float(v) for v in rest.split()])
    tr = np.eye(4)
    tr[:3, :4] = entries["Tr_velo_to_cam"].reshape(3, 4)
    r0 = np.eye(4)
    if "R0_rect" in entries:
        r0[:3, :3] = entries["R0_rect"].reshape(3, 3)
    return r0 @ tr


def decimate_labels(
    labels: list[KittiLabel],
    decimated: PointCloud,
    min_points: int = 1,
    velo_to_cam: np.ndarray | None = None,
) -> list[KittiLabel]:
    """Keep vehicle labels whose box still holds ``min_points`` points of the decimated cloud."""
    if min_points < 1:
        raise ValueError("min_points must be >= 1")
    tf = DEFAULT_VELO_TO_CAM if velo_to_cam is None else np.asarray(velo_to_cam, dtype=float)
    cam = decimated.xyz @ tf[:3, :3].T + tf[:3, 3]
    kept = []
    for label in labels:
        if label.object_type.lower() not in VEHICLE_TYPES:
            continue
        if int(label.points_inside(cam).sum()) >= min_points:
            kept.append(label)
    return kept
