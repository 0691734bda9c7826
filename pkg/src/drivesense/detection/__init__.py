from .azimuth import (
    AzimuthConfig,
    consolidate,
    detect,
    detect_full_azimuth,
    detect_full_azimuth_map,
    rotate_detection,
)
from .detectors import ClusterDetector, FailingDetector, OracleDetector
from .service import OdsClient, ods_client, serve_ods
from .types import CLASSES, Detection, Detector

__all__ = [
    "AzimuthConfig",
    "CLASSES",
    "ClusterDetector",
    "Detection",
    "Detector",
    "FailingDetector",
    "OdsClient",
    "OracleDetector",
    "consolidate",
    "detect",
    "detect_full_azimuth",
    "detect_full_azimuth_map",
    "ods_client",
    "rotate_detection",
    "serve_ods",
]
