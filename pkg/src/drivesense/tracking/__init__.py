from ..geometry import OrientedBox, iou_oriented
from .association import Association, associate, associate_iou, associate_mahalanobis
from .kalman import KalmanState, kf_correct, kf_predict, process_noise, transition
from .service import MotsClient, SessionRegistry, mots_client, serve_mots
from .tracker import (
    Frame,
    Track,
    TrackedBox,
    TrackerConfig,
    TrackerSession,
    TrackStatus,
    correct,
    new_track,
    predict,
    update_frame,
)

__all__ = [
    "Association",
    "Frame",
    "KalmanState",
    "MotsClient",
    "OrientedBox",
    "SessionRegistry",
    "Track",
    "TrackStatus",
    "TrackedBox",
    "TrackerConfig",
    "TrackerSession",
    "associate",
    "associate_iou",
    "associate_mahalanobis",
    "correct",
    "iou_oriented",
    "kf_correct",
    "kf_predict",
    "mots_client",
    "new_track",
    "predict",
    "process_noise",
    "serve_mots",
    "transition",
    "update_frame",
]
