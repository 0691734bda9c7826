"""Full 360-degree detection with a front-facing detector.

The map is cut at x = 0; the rear half is turned half a revolution so it looks
like a front view, both halves are detected separately, the rear detections
are turned back and the two sets are merged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..bevmap import BevMap, GridConfig, make_frgb, quantized, split_halves
from ..errors import DetectorFailure, DomainError, ServiceError
from ..geometry import iou_oriented
from ..pointcloud import PointCloud
from .detectors import flip_detection
from .types import Detection, Detector


def rotate_detection(det: Detection, angle: float = math.pi) -> Detection:
    """Rotate a detection about the ego origin (half a revolution by default)."""
    if angle == math.pi:
        return flip_detection(det)
    return Detection(det.box.transformed(angle), det.cls, det.score)


def detect(bev: BevMap, detector: Detector) -> list[Detection]:
    try:
        dets = detector.detect(bev)
    except ServiceError as exc:
        if exc.frame_id is None:
            exc.frame_id = bev.frame_id
        raise
    except Exception as exc:
        raise DetectorFailure(f"detector failed on frame {bev.frame_id}: {exc}", frame_id=bev.frame_id) from exc
    return list(dets)


def consolidate(front: list[Detection], rear: list[Detection], iou_thresh: float = 0.3) -> list[Detection]:
    """Union of both sets with duplicates suppressed, highest score first.

    Candidates are visited by descending score (front before rear on ties) and
    dropped when they overlap an already kept box with IoU >= ``iou_thresh``.
    """
    if not 0.0 < iou_thresh < 1.0:
        raise DomainError("iou_thresh must lie in (0, 1)")
    candidates = sorted(list(front) + list(rear), key=lambda d: -d.score)
    kept: list[Detection] = []
    for det in candidates:
        if all(iou_oriented(det.box, k.box) < iou_thresh for k in kept):
            kept.append(det)
    return kept


@dataclass(frozen=True)
class AzimuthConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    iou_thresh: float = 0.3
    margin_m: float = 0.0
    # detect on the 8-bit map a remote service would receive
    quantize: bool = False


def detect_full_azimuth_map(bev: BevMap, detector: Detector, cfg: AzimuthConfig = AzimuthConfig()) -> list[Detection]:
    if cfg.quantize:
        bev = quantized(bev)
    front, rear = split_halves(bev, cfg.margin_m)
    front_dets = detect(front, detector)
    rear_dets = [rotate_detection(d) for d in detect(rear, detector)]
    return consolidate(front_dets, rear_dets, cfg.iou_thresh)


def detect_full_azimuth(cloud: PointCloud, detector: Detector, cfg: AzimuthConfig = AzimuthConfig()) -> list[Detection]:
    return detect_full_azimuth_map(make_frgb(cloud, cfg.grid), detector, cfg)
