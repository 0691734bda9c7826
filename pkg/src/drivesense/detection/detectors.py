"""Reference detectors that stand in for a trained network.

``OracleDetector`` replays ground truth with configurable corruption and is
what the tests and the synthetic pipeline use. ``ClusterDetector`` works on the
raster alone (connected occupied cells boxed by a minimum-area rectangle), so
it exercises the map geometry end to end.
"""

from __future__ import annotations

import math
import zlib
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import ndimage

from ..bevmap import HALVES, BevMap
from ..geometry import OrientedBox, min_area_rect
from .types import Detection


def flip_detection(det: Detection) -> Detection:
    b = det.box
    return Detection(OrientedBox(-b.cx, -b.cy, b.w, b.l, b.yaw + math.pi), det.cls, det.score)


class OracleDetector:
    """Ground truth in, detections out.

    ``truth`` maps frame id to the boxes of that frame in the ego frame (or is a
    callable doing the lookup). A truth box is reported for a map when at least
    ``min_support_cells`` occupied cells of that map fall inside it, grown by
    one cell on every side. Noise,
    misses and spurious boxes are drawn from a generator seeded by
    (seed, frame id, half), so results do not depend on call order.
    """

    thread_safe = True

    def __init__(
        self,
        truth: Mapping[str, Sequence[Detection]] | Callable[[str], Sequence[Detection]],
        *,
        position_sigma: float = 0.0,
        yaw_sigma: float = 0.0,
        extent_sigma: float = 0.0,
        fp_rate: float = 0.0,
        fp_slots: int = 0,
        fn_rate: float = 0.0,
        min_support_cells: int = 1,
        seed: int = 0,
    ):
        self._truth = truth
        self.position_sigma = position_sigma
        self.yaw_sigma = yaw_sigma
        self.extent_sigma = extent_sigma
        self.fp_rate = fp_rate
        self.fp_slots = fp_slots
        self.fn_rate = fn_rate
        self.min_support_cells = min_support_cells
        self.seed = seed

    def truth_for(self, frame_id: str) -> list[Detection]:
        if callable(self._truth):
            return list(self._truth(frame_id))
        return list(self._truth.get(frame_id, ()))

    def _rng(self, bev: BevMap) -> np.random.Generator:
        return np.random.default_rng([self.seed, zlib.crc32(bev.frame_id.encode()), HALVES.index(bev.half)])

    def detect(self, bev: BevMap) -> list[Detection]:
        truth = self.truth_for(bev.frame_id)
        if bev.half == "rear":
            truth = [flip_detection(d) for d in truth]
        rows, cols = np.nonzero(bev.occupied)
        cell_xy = np.column_stack(bev.cell_centers(rows, cols))
        rng = self._rng(bev)
        cs = bev.config.cell_size
        out = []
        for det in truth:
            # returns lie on the vehicle surface, so their cell centres can sit
            # up to a cell outside the footprint
            b = det.box
            grown = OrientedBox(b.cx, b.cy, b.w + 2 * cs, b.l + 2 * cs, b.yaw)
            support = int(grown.contains(cell_xy).sum()) if len(cell_xy) else 0
            # draw unconditionally so one box's visibility does not shift another's noise
            missed = rng.random() < self.fn_rate
            noise = rng.normal(size=5)
            if support < self.min_support_cells or missed:
                continue
            box = OrientedBox(
                b.cx + self.position_sigma * noise[0],
                b.cy + self.position_sigma * noise[1],
                max(0.1, b.w + self.extent_sigma * noise[2]),
                max(0.1, b.l + self.extent_sigma * noise[3]),
                b.yaw + self.yaw_sigma * noise[4],
            )
            out.append(Detection(box, det.cls, det.score))
        x_lo, x_hi = bev.x_range()
        r = bev.config.extent_m
        for _ in range(self.fp_slots):
            hit = rng.random() < self.fp_rate
            u = rng.random(5)
            if not hit:
                continue
            box = OrientedBox(
                x_lo + 2.0 + u[0] * max(0.0, x_hi - x_lo - 4.0),
                -r + 2.0 + u[1] * (2 * r - 4.0),
                1.6 + 0.4 * u[2],
                3.8 + 1.2 * u[3],
                (u[4] - 0.5) * 2 * math.pi,
            )
            out.append(Detection(box, "car", 0.3 + 0.3 * float(rng.random())))
        return out


class ClusterDetector:
    """Boxes around 8-connected groups of occupied cells.

    Cells whose normalised height is at or below ``min_height`` are ignored,
    which lets the detector skip ground returns kept in the map. Box yaw is only
    known modulo pi and is reported in (-pi/2, pi/2].
    """

    thread_safe = True

    def __init__(self, min_cells: int = 3, min_height: float = 0.0, truck_length: float = 6.5, van_length: float = 5.2):
        self.min_cells = min_cells
        self.min_height = min_height
        self.truck_length = truck_length
        self.van_length = van_length

    def detect(self, bev: BevMap) -> list[Detection]:
        mask = bev.occupied & (bev.height > self.min_height)
        labels, count = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
        if count == 0:
            return []
        cs = bev.config.cell_size
        out = []
        for k, sl in enumerate(ndimage.find_objects(labels), start=1):
            rr, cc = np.nonzero(labels[sl] == k)
            if len(rr) < self.min_cells:
                continue
            x, y = bev.cell_centers(rr + sl[0].start, cc + sl[1].start)
            cx, cy, w, l, yaw = min_area_rect(np.column_stack([x, y]))
            w, l = w + cs, l + cs
            if l >= self.truck_length:
                cls = "truck"
            elif l >= self.van_length:
                cls = "van"
            else:
                cls = "car"
            score = min(1.0, 0.5 + len(rr) / 200.0)
            out.append(Detection(OrientedBox(cx, cy, w, l, yaw), cls, score))
        out.sort(key=lambda d: (-d.score, round(d.box.cx, 6), round(d.box.cy, 6)))
        return out


class FailingDetector:
    """Always raises; used to exercise error propagation."""

    thread_safe = True

    def __init__(self, message: str = "detector failure"):
        self.message = message

    def detect(self, bev: BevMap) -> list[Detection]:
        raise RuntimeError(self.message)
