"""Sensor vertical-channel layouts and channel-based decimation of point clouds."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ..errors import DomainError
from .cloud import PointCloud


@dataclass(frozen=True)
class SensorProfile:
    name: str
    channel_angles: tuple[float, ...]
    vfov_min: float
    vfov_max: float

    def __post_init__(self):
        angles = tuple(float(a) for a in self.channel_angles)
        object.__setattr__(self, "channel_angles", angles)
        if self.vfov_min >= self.vfov_max:
            raise DomainError("vfov_min must be below vfov_max")
        if any(b <= a for a, b in zip(angles, angles[1:])):
            raise DomainError("channel angles must be strictly increasing")
        if any(a < self.vfov_min or a > self.vfov_max for a in angles):
            raise DomainError("channel angle outside the vertical field of view")

    @property
    def num_channels(self) -> int:
        return len(self.channel_angles)


# 16 lasers, 2 degree pitch over +-15 degrees.
PUCK = SensorProfile("VLP-16", tuple(range(-15, 16, 2)), -15.0, 15.0)
# Factory calibration differs per unit; evenly spaced lasers over the published vFOV.
HDL64E = SensorProfile("HDL-64E", tuple(np.linspace(-24.9, 2.0, 64)), -24.9, 2.0)

PROFILES = {"puck": PUCK, "vlp16": PUCK, "hdl64e": HDL64E}


@dataclass(frozen=True)
class ChannelMatch:
    """A target channel inside the source vFOV and the source laser closest to it."""

    target_index: int
    target_angle: float
    source_index: int
    source_angle: float


def intersect_profiles(source: SensorProfile, target: SensorProfile) -> list[ChannelMatch]:
    """Target channels that the source sensor can reproduce, sorted by angle.

    ``source`` is the sensor the data was recorded with; ``target`` is the
    sensor being emulated.
    """
    src = np.asarray(source.channel_angles)
    matches = []
    for ti, angle in enumerate(target.channel_angles):
        if source.vfov_min <= angle <= source.vfov_max:
            si = int(np.abs(src - angle).argmin())
            matches.append(ChannelMatch(ti, angle, si, float(src[si])))
    return sorted(matches, key=lambda m: m.target_angle)


def _angles(matched: Iterable[ChannelMatch | float]) -> np.ndarray:
    return np.array([m.source_angle if isinstance(m, ChannelMatch) else float(m) for m in matched], dtype=float)


def decimate(cloud: PointCloud, matched_channels: Sequence[ChannelMatch | float], tol_deg: float = 0.5) -> PointCloud:
    """Keep the points whose vertical angle is within ``tol_deg`` of a kept laser.

    ``matched_channels`` may be :class:`ChannelMatch` objects (the source laser
    angle is used, since that is what the recorded points carry) or raw angles.
    """
    if not tol_deg > 0:
        raise DomainError("tol_deg must be positive")
    angles = _angles(matched_channels)
    if angles.size == 0 or len(cloud) == 0:
        return cloud.select(np.zeros(len(cloud), dtype=bool))
    dist = np.abs(cloud.vertical_angle[:, None] - angles[None, :]).min(axis=1)
    return cloud.select(dist <= tol_deg)
