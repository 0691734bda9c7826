"""Planar oriented boxes and their intersection-over-union.

Boxes live in the ego frame: x forward, y left, yaw counter-clockwise from +x.
``l`` is measured along the heading and ``w`` across it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

TWO_PI = 2.0 * math.pi


def normalize_angle(angle: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    a = math.remainder(angle, TWO_PI)
    if a <= -math.pi:
        a += TWO_PI
    return a


@dataclass(frozen=True)
class OrientedBox:
    cx: float
    cy: float
    w: float
    l: float
    yaw: float = 0.0

    def __post_init__(self):
        for name in ("cx", "cy", "w", "l", "yaw"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"box field {name} is not finite")
        if not (self.w > 0 and self.l > 0):
            raise DomainError(f"box extents must be positive, got w={self.w}, l={self.l}")
        object.__setattr__(self, "yaw", normalize_angle(self.yaw))

    @property
    def area(self) -> float:
        return self.w * self.l

    def corners(self) -> np.ndarray:
        """Four corners in counter-clockwise order, shape (4, 2)."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        hl, hw = self.l / 2.0, self.w / 2.0
        local = np.array([[hl, -hw], [hl, hw], [-hl, hw], [-hl, -hw]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([self.cx, self.cy])

    def contains(self, xy: np.ndarray) -> np.ndarray:
        """Boolean mask of the points of ``xy`` (n, 2) that lie inside or on the box."""
        xy = np.asarray(xy, dtype=float)
        d = xy - np.array([self.cx, self.cy])
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        u = d[:, 0] * c + d[:, 1] * s
        v = -d[:, 0] * s + d[:, 1] * c
        return (np.abs(u) <= self.l / 2.0) & (np.abs(v) <= self.w / 2.0)

    def transformed(self, angle: float, tx: float = 0.0, ty: float = 0.0) -> "OrientedBox":
        """Rotate about the origin by ``angle`` then translate by (tx, ty)."""
        c, s = math.cos(angle), math.sin(angle)
        return OrientedBox(
            c * self.cx - s * self.cy + tx,
            s * self.cx + c * self.cy + ty,
            self.w,
            self.l,
            self.yaw + angle,
        )


def polygon_area(poly: np.ndarray) -> float:
    """Signed shoelace area; positive for counter-clockwise vertices."""
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def clip_convex(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clipping of ``subject`` by the convex CCW polygon ``clip``."""
    output = [tuple(p) for p in subject]
    n = len(clip)
    for i in range(n):
        if not output:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n]
        ex, ey = bx - ax, by - ay
        inp = output
        output = []
        sx, sy = inp[-1]
        s_side = ex * (sy - ay) - ey * (sx - ax)
        for px, py in inp:
            p_side = ex * (py - ay) - ey * (px - ax)
            if p_side >= 0:
                if s_side < 0:
                    output.append(_cross_point(sx, sy, s_side, px, py, p_side))
                output.append((px, py))
            elif s_side >= 0:
                output.append(_cross_point(sx, sy, s_side, px, py, p_side))
            sx, sy, s_side = px, py, p_side
    return np.array(output, dtype=float).reshape(-1, 2)


def _cross_point(sx, sy, s_side, px, py, p_side):
    t = s_side / (s_side - p_side)
    return (sx + t * (px - sx), sy + t * (py - sy))


def intersection_area(a: OrientedBox, b: OrientedBox) -> float:
    # cheap reject on circumscribed circles
    ra = 0.5 * math.hypot(a.w, a.l)
    rb = 0.5 * math.hypot(b.w, b.l)
    if math.hypot(a.cx - b.cx, a.cy - b.cy) > ra + rb:
        return 0.0
    poly = clip_convex(a.corners(), b.corners())
    return max(0.0, polygon_area(poly))


def iou_oriented(a: OrientedBox, b: OrientedBox) -> float:
    """Intersection over union of two oriented rectangles, in [0, 1]."""
    area_a, area_b = a.area, b.area
    if not (area_a > 0 and area_b > 0):
        raise DomainError("iou of a zero-area box is undefined")
    inter = intersection_area(a, b)
    union = area_a + area_b - inter
    return min(1.0, max(0.0, inter / union))


def iou_matrix(boxes_a: list[OrientedBox], boxes_b: list[OrientedBox]) -> np.ndarray:
    out = np.zeros((len(boxes_a), len(boxes_b)))
    for i, a in enumerate(boxes_a):
        for j, b in enumerate(boxes_b):
            out[i, j] = iou_oriented(a, b)
    return out


def min_area_rect(xy: np.ndarray) -> tuple[float, float, float, float, float]:
    """Smallest-area enclosing rectangle of a point set.

    Returns (cx, cy, w, l, yaw) with ``l >= w`` and yaw in (-pi/2, pi/2].
    Extents are zero for degenerate (collinear or single-point) input.
    """
    from scipy.spatial import ConvexHull, QhullError

    xy = np.unique(np.asarray(xy, dtype=float), axis=0)
    try:
        hull = xy[ConvexHull(xy).vertices] if len(xy) >= 3 else xy
    except QhullError:
        hull = xy
    best = None
    if len(hull) == 1:
        angles = [0.0]
    else:
        edges = np.diff(np.vstack([hull, hull[:1]]), axis=0)
        angles = np.unique(np.mod(np.arctan2(edges[:, 1], edges[:, 0]), math.pi / 2))
    for ang in angles:
        c, s = math.cos(ang), math.sin(ang)
        u = hull[:, 0] * c + hull[:, 1] * s
        v = -hull[:, 0] * s + hull[:, 1] * c
        du, dv = u.max() - u.min(), v.max() - v.min()
        area = du * dv
        if best is None or area < best[0] - 1e-12:
            um, vm = 0.5 * (u.max() + u.min()), 0.5 * (v.max() + v.min())
            best = (area, ang, du, dv, um * c - vm * s, um * s + vm * c)
    _, ang, du, dv, cx, cy = best
    if du >= dv:
        yaw, l, w = ang, du, dv
    else:
        yaw, l, w = ang + math.pi / 2, dv, du
    yaw = normalize_angle(yaw)
    if yaw <= -math.pi / 2:
        yaw += math.pi
    elif yaw > math.pi / 2:
        yaw -= math.pi
    return float(cx), float(cy), float(w), float(l), float(yaw)
