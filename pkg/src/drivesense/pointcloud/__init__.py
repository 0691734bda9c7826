from .cloud import Point, PointCloud, vertical_angles
from .filters import Bounds, GroundConfig, GroundRemoval, cluster, crop, remove_ground, rotate_z
from .io import format_frame, parse_frame
from .kitti import KittiLabel, VEHICLE_TYPES, decimate_labels, parse_kitti_labels, read_kitti_calib
from .profiles import HDL64E, PROFILES, PUCK, ChannelMatch, SensorProfile, decimate, intersect_profiles

__all__ = [
    "Bounds",
    "ChannelMatch",
    "GroundConfig",
    "GroundRemoval",
    "HDL64E",
    "KittiLabel",
    "PROFILES",
    "PUCK",
    "Point",
    "PointCloud",
    "SensorProfile",
    "VEHICLE_TYPES",
    "cluster",
    "crop",
    "decimate",
    "decimate_labels",
    "format_frame",
    "intersect_profiles",
    "parse_frame",
    "parse_kitti_labels",
    "read_kitti_calib",
    "remove_ground",
    "rotate_z",
    "vertical_angles",
]
