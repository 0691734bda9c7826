"""Geometric filters: rotation, cropping, ground removal and clustering."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from ..errors import DomainError
from .cloud import PointCloud


def rotate_z(cloud: PointCloud, angle_rad: float) -> PointCloud:
    if not math.isfinite(angle_rad):
        raise DomainError("rotation angle must be finite")
    c, s = math.cos(angle_rad), math.sin(angle_rad)
    xyz = cloud.xyz.copy()
    xyz[:, 0] = c * cloud.xyz[:, 0] - s * cloud.xyz[:, 1]
    xyz[:, 1] = s * cloud.xyz[:, 0] + c * cloud.xyz[:, 1]
    return cloud.with_xyz(xyz)


@dataclass(frozen=True)
class Bounds:
    """Closed axis-aligned box in meters."""

    x: tuple[float, float]
    y: tuple[float, float]
    z: tuple[float, float] = (-math.inf, math.inf)

    def __post_init__(self):
        for axis in (self.x, self.y, self.z):
            if not axis[0] < axis[1]:
                raise DomainError(f"bounds need min < max, got {axis}")

    def intersect(self, other: "Bounds") -> "Bounds | None":
        axes = []
        for a, b in zip((self.x, self.y, self.z), (other.x, other.y, other.z)):
            lo, hi = max(a[0], b[0]), min(a[1], b[1])
            if not lo < hi:
                return None
            axes.append((lo, hi))
        return Bounds(*axes)

    def mask(self, xyz: np.ndarray) -> np.ndarray:
        lo = np.array([self.x[0], self.y[0], self.z[0]])
        hi = np.array([self.x[1], self.y[1], self.z[1]])
        return np.all((xyz >= lo) & (xyz <= hi), axis=1)


def crop(cloud: PointCloud, bounds: Bounds) -> PointCloud:
    return cloud.select(bounds.mask(cloud.xyz))


@dataclass(frozen=True)
class GroundConfig:
    method: str = "plane"  # or "z"
    inlier_threshold_m: float = 0.2
    max_normal_tilt_deg: float = 15.0
    iterations: int = 100
    min_inlier_fraction: float = 0.1
    z_threshold: float = -1.5
    seed: int = 0


@dataclass(frozen=True, eq=False)
class GroundRemoval:
    cloud: PointCloud
    plane: np.ndarray | None  # (a, b, c, d), unit normal with c > 0
    plane_found: bool
    removed: np.ndarray  # boolean mask over the input cloud

    def __iter__(self):
        return iter((self.cloud, self.plane))


def _plane_through(p: np.ndarray) -> np.ndarray | None:
    n = np.cross(p[1] - p[0], p[2] - p[0])
    norm = np.linalg.norm(n)
    if norm < 1e-12:
        return None
    n = n / norm
    if n[2] < 0:
        n = -n
    return np.append(n, -n @ p[0])


def _lsq_plane(pts: np.ndarray) -> np.ndarray:
    centroid = pts.mean(axis=0)
    _, _, vt = np.linalg.svd(pts - centroid, full_matrices=False)
    n = vt[-1]
    if n[2] < 0:
        n = -n
    return np.append(n, -n @ centroid)


def remove_ground(cloud: PointCloud, cfg: GroundConfig = GroundConfig()) -> GroundRemoval:
    """Drop ground returns either by a RANSAC plane or by a fixed z threshold."""
    n = len(cloud)
    if cfg.method == "z":
        removed = cloud.xyz[:, 2] < cfg.z_threshold
        return GroundRemoval(cloud.select(~removed), None, False, removed)
    if cfg.method != "plane":
        raise DomainError(f"unknown ground removal method {cfg.method!r}")
    if n < 3:
        raise DomainError("plane ground removal needs at least 3 points")

    pts = cloud.xyz
    rng = np.random.default_rng(cfg.seed)
    cos_tilt = math.cos(math.radians(cfg.max_normal_tilt_deg))
    best_plane, best_count = None, 0
    for _ in range(cfg.iterations):
        plane = _plane_through(pts[rng.choice(n, 3, replace=False)])
        if plane is None or plane[2] < cos_tilt:
            continue
        count = int(np.count_nonzero(np.abs(pts @ plane[:3] + plane[3]) <= cfg.inlier_threshold_m))
        if count > best_count:
            best_plane, best_count = plane, count

    if best_plane is not None:
        inliers = np.abs(pts @ best_plane[:3] + best_plane[3]) <= cfg.inlier_threshold_m
        refined = _lsq_plane(pts[inliers])
        if refined[2] >= cos_tilt:
            refined_inliers = np.abs(pts @ refined[:3] + refined[3]) <= cfg.inlier_threshold_m
            if refined_inliers.sum() >= best_count:
                best_plane, inliers, best_count = refined, refined_inliers, int(refined_inliers.sum())

    if best_plane is None or best_count < cfg.min_inlier_fraction * n:
        return GroundRemoval(cloud, None, False, np.zeros(n, dtype=bool))
    return GroundRemoval(cloud.select(~inliers), best_plane, True, inliers)


def cluster(cloud: PointCloud, eps_m: float = 0.5, min_cluster_size: int = 5) -> list[np.ndarray]:
    """Euclidean connectivity clusters in the x-y plane.

    Two points are linked when their planar distance is at most ``eps_m``;
    groups are the connected components, smallest point index first.
    """
    if not eps_m > 0:
        raise DomainError("eps_m must be positive")
    if min_cluster_size < 1:
        raise DomainError("min_cluster_size must be >= 1")
    n = len(cloud)
    if n == 0:
        return []
    pairs = cKDTree(cloud.xyz[:, :2]).query_pairs(eps_m, output_type="ndarray")
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    order = np.argsort(labels, kind="stable")
    bounds = np.flatnonzero(np.diff(labels[order])) + 1
    groups = [g for g in np.split(order, bounds) if len(g) >= min_cluster_size]
    return sorted(groups, key=lambda g: g[0])
