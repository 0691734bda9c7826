"""Tracking sessions: Kalman-filtered boxes with IoU association and lifecycle rules."""

from __future__ import annotations

import enum
import itertools
import math
import threading
from dataclasses import dataclass, field, replace

from ..detection.types import Detection
from ..errors import ConfigError, OrderingError, SchemaError
from ..geometry import OrientedBox, normalize_angle
from .association import Association, associate, associate_mahalanobis
from .kalman import KalmanState, kf_correct, kf_predict


class TrackStatus(str, enum.Enum):
    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"
    DEAD = "dead"


@dataclass(frozen=True)
class TrackerConfig:
    confirm_hits: int = 3
    max_misses: int = 5
    gate_iou: float = 0.1
    process_noise_accel_sigma: float = 1.0
    meas_noise_sigma: float = 0.3
    extents_smoothing_alpha: float = 0.3
    init_velocity_var: float = 1e2
    # second pass for pairs the IoU gate rejected: squared Mahalanobis distance
    # of the centre under the innovation covariance (chi-square, 2 dof); 0 disables
    recovery_gate_chi2: float = 18.4

    def __post_init__(self):
        if self.confirm_hits < 1 or self.max_misses < 1:
            raise ConfigError("confirm_hits and max_misses must be >= 1")
        if not 0.0 <= self.gate_iou < 1.0:
            raise ConfigError("gate_iou must lie in [0, 1)")
        if not 0.0 <= self.extents_smoothing_alpha <= 1.0:
            raise ConfigError("extents_smoothing_alpha must lie in [0, 1]")
        if self.process_noise_accel_sigma < 0 or self.meas_noise_sigma <= 0:
            raise ConfigError("noise levels must be positive")
        if self.recovery_gate_chi2 < 0:
            raise ConfigError("recovery_gate_chi2 must be non-negative")

    @classmethod
    def from_dict(cls, d: dict | None) -> "TrackerConfig":
        d = dict(d or {})
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown tracker option(s): {', '.join(sorted(unknown))}")
        return cls(**d)


@dataclass(frozen=True)
class Track:
    id: int
    state: KalmanState
    w: float
    l: float
    yaw: float
    cls: str
    score: float
    status: TrackStatus = TrackStatus.TENTATIVE
    hit_streak: int = 1
    miss_streak: int = 0
    last_update_us: int = 0

    @property
    def box(self) -> OrientedBox:
        x, y = self.state.position
        return OrientedBox(x, y, self.w, self.l, self.yaw)


def new_track(track_id: int, det: Detection, timestamp_us: int, cfg: TrackerConfig) -> Track:
    b = det.box
    state = KalmanState.initial(b.cx, b.cy, cfg.meas_noise_sigma**2, cfg.init_velocity_var)
    status = TrackStatus.CONFIRMED if cfg.confirm_hits <= 1 else TrackStatus.TENTATIVE
    return Track(track_id, state, b.w, b.l, b.yaw, det.cls, det.score, status, 1, 0, timestamp_us)


def predict(track: Track, dt_s: float, cfg: TrackerConfig = TrackerConfig()) -> Track:
    return replace(track, state=kf_predict(track.state, dt_s, cfg.process_noise_accel_sigma))


def _smooth_yaw(current: float, measured: float, alpha: float) -> float:
    d = normalize_angle(measured - current)
    # a box turned by pi is the same box; do not let heading flips drag the estimate
    if abs(d) > math.pi / 2:
        d = normalize_angle(d - math.pi)
    return normalize_angle(current + alpha * d)


def correct(track: Track, det: Detection, cfg: TrackerConfig = TrackerConfig()) -> Track:
    b = det.box
    alpha = cfg.extents_smoothing_alpha
    return replace(
        track,
        state=kf_correct(track.state, (b.cx, b.cy), cfg.meas_noise_sigma),
        w=(1 - alpha) * track.w + alpha * b.w,
        l=(1 - alpha) * track.l + alpha * b.l,
        yaw=_smooth_yaw(track.yaw, b.yaw, alpha),
        cls=det.cls,
        score=det.score,
    )


@dataclass(frozen=True)
class TrackedBox:
    box: OrientedBox
    cls: str
    score: float
    id: int
    vx: float
    vy: float
    status: TrackStatus = TrackStatus.CONFIRMED

    @property
    def detection(self) -> Detection:
        return Detection(self.box, self.cls, self.score)

    def to_dict(self) -> dict:
        d = self.detection.to_dict()
        d.update(id=self.id, vx=self.vx, vy=self.vy, status=self.status.value)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrackedBox":
        det = Detection.from_dict(d)
        try:
            return cls(det.box, det.cls, det.score, int(d["id"]), float(d["vx"]), float(d["vy"]), TrackStatus(d["status"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad tracked box {d!r}: {exc}") from None


@dataclass(frozen=True)
class Frame:
    """Boxes at one instant: detections going in, tracked boxes coming out."""

    frame_id: str
    timestamp_us: int
    boxes: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        object.__setattr__(self, "timestamp_us", int(self.timestamp_us))

    def to_dict(self) -> dict:
        return {
            "frame_id": self.frame_id,
            "timestamp_us": self.timestamp_us,
            "boxes": [b.to_dict() for b in self.boxes],
        }

    @classmethod
    def from_dict(cls, d: dict, tracked: bool = False) -> "Frame":
        if not isinstance(d, dict):
            raise SchemaError("frame must be an object")
        try:
            frame_id = str(d["frame_id"])
            ts = int(d["timestamp_us"])
            raw = d.get("boxes", [])
            if not isinstance(raw, list):
                raise TypeError("boxes must be a list")
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad frame: {exc}") from None
        parse = TrackedBox.from_dict if tracked else Detection.from_dict
        return cls(frame_id, ts, [parse(b) for b in raw])


@dataclass
class TrackerSession:
    """One independent tracking state machine; frames must arrive in time order."""

    config: TrackerConfig = field(default_factory=TrackerConfig)
    tracks: list[Track] = field(default_factory=list)
    last_timestamp_us: int | None = None
    issued_ids: list[int] = field(default_factory=list)
    dead_ids: set[int] = field(default_factory=set)
    _ids: itertools.count = field(default_factory=lambda: itertools.count(1), repr=False)
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def update(self, frame: Frame) -> Frame:
        cfg = self.config
        t = frame.timestamp_us
        if self.last_timestamp_us is not None and t <= self.last_timestamp_us:
            raise OrderingError(f"frame {frame.frame_id} at {t} us does not follow {self.last_timestamp_us} us")
        if self.last_timestamp_us is not None:
            dt = (t - self.last_timestamp_us) * 1e-6
            tracks = [predict(tr, dt, cfg) for tr in self.tracks]
        else:
            tracks = list(self.tracks)
        tracks.sort(key=lambda tr: tr.id)
        dets = [b if isinstance(b, Detection) else b.detection for b in frame.boxes]

        assoc = associate([tr.box for tr in tracks], [d.box for d in dets], cfg.gate_iou)
        if cfg.recovery_gate_chi2 > 0 and assoc.unmatched_tracks and assoc.unmatched_detections:
            assoc = self._recover(assoc, tracks, dets)
        survivors: list[Track] = []
        for ti, di in assoc.matches:
            tr = correct(tracks[ti], dets[di], cfg)
            hits = tr.hit_streak + 1
            status = tr.status
            if status is TrackStatus.TENTATIVE and hits >= cfg.confirm_hits:
                status = TrackStatus.CONFIRMED
            survivors.append(replace(tr, hit_streak=hits, miss_streak=0, status=status, last_update_us=t))
        for ti in assoc.unmatched_tracks:
            tr = tracks[ti]
            misses = tr.miss_streak + 1
            # a tentative track has not earned imputation; one miss ends it
            if misses > cfg.max_misses or tr.status is TrackStatus.TENTATIVE:
                self.dead_ids.add(tr.id)
                continue
            # best-guess imputation: keep the predicted state; consecutive hits start over
            survivors.append(replace(tr, miss_streak=misses, hit_streak=0))
        for di in assoc.unmatched_detections:
            tid = next(self._ids)
            self.issued_ids.append(tid)
            survivors.append(new_track(tid, dets[di], t, cfg))

        survivors.sort(key=lambda tr: tr.id)
        self.tracks = survivors
        self.last_timestamp_us = t
        out = [
            TrackedBox(tr.box, tr.cls, tr.score, tr.id, *tr.state.velocity, tr.status)
            for tr in survivors
            if tr.status is TrackStatus.CONFIRMED
        ]
        return Frame(frame.frame_id, t, out)


    def _recover(self, assoc: Association, tracks: list[Track], dets: list[Detection]) -> Association:
        ut, ud = assoc.unmatched_tracks, assoc.unmatched_detections
        extra = associate_mahalanobis(
            [tracks[i].state for i in ut],
            [(dets[j].box.cx, dets[j].box.cy) for j in ud],
            self.config.meas_noise_sigma,
            self.config.recovery_gate_chi2,
        )
        pairs = [(ut[a], ud[b]) for a, b in extra.matches]
        return Association(
            sorted(assoc.matches + pairs),
            [ut[a] for a in extra.unmatched_tracks],
            [ud[b] for b in extra.unmatched_detections],
        )


def update_frame(session: TrackerSession, frame: Frame) -> Frame:
    with session.lock:
        return session.update(frame)
