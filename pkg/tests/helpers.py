"""Shared test fixtures builders."""

import math

import numpy as np

from drivesense.pointcloud import PointCloud


def cloud_from(xyz, intensity=None, ring=None, frame_id="f0", timestamp_us=1):
    xyz = np.asarray(xyz, dtype=float).reshape(-1, 3)
    n = len(xyz)
    intensity = np.full(n, 100.0) if intensity is None else np.asarray(intensity, dtype=float)
    ring = np.zeros(n, dtype=int) if ring is None else np.asarray(ring)
    vert = np.degrees(np.arctan2(xyz[:, 2], np.hypot(xyz[:, 0], xyz[:, 1]))) if n else np.zeros(0)
    return PointCloud(xyz, intensity, ring, vert, timestamp_us, frame_id)


def box_points(cx, cy, w, l, yaw=0.0, z=(-1.5, 0.0), n=400, seed=0):
    """Points filling the volume of an oriented box."""
    rng = np.random.default_rng(seed)
    u = rng.uniform(-0.5, 0.5, size=(n, 2)) * [l, w]
    c, s = math.cos(yaw), math.sin(yaw)
    x = cx + c * u[:, 0] - s * u[:, 1]
    y = cy + s * u[:, 0] + c * u[:, 1]
    return np.column_stack([x, y, rng.uniform(*z, size=n)])
