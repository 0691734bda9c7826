"""Ego dynamics, lane assignment and leader/follower extraction.

Lanes are straight and parallel to the ego heading: the ego lane is centred on
y = 0 and the left/right neighbours are one lane width to either side.
"""

from __future__ import annotations

import bisect
import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ParseError, RangeError, SchemaError
from .tracking.tracker import TrackedBox

DYNAMICS_COLUMNS = ("timestamp_us", "speed_mps", "accel_mps2", "steer_deg", "throttle", "brake")
LANES = ("left", "ego", "right")


@dataclass(frozen=True)
class EgoSample:
    timestamp_us: int
    speed: float
    accel: float | None = None
    steer_deg: float | None = None
    throttle: float | None = None
    brake: float | None = None


def _opt_float(row: dict, key: str, lineno: int) -> float | None:
    raw = (row.get(key) or "").strip()
    if raw == "":
        return None
    try:
        return float(raw)
    except ValueError:
        raise ParseError(f"{key}={raw!r} is not a number", line=lineno) from None


def parse_dynamics(data: bytes | str) -> list[EgoSample]:
    """Read the dynamics CSV; rows are returned sorted by timestamp."""
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    reader = csv.DictReader(io.StringIO(text))
    fields = [f.strip() for f in (reader.fieldnames or [])]
    for required in ("timestamp_us", "speed_mps"):
        if required not in fields:
            raise SchemaError(f"missing required column {required}", line=1)
    reader.fieldnames = fields
    samples = []
    for lineno, row in enumerate(reader, start=2):
        try:
            ts = int(row["timestamp_us"])
        except (TypeError, ValueError):
            raise ParseError(f"bad timestamp {row['timestamp_us']!r}", line=lineno) from None
        speed = _opt_float(row, "speed_mps", lineno)
        if speed is None or not math.isfinite(speed):
            raise SchemaError("speed is required", line=lineno)
        if speed < 0:
            raise SchemaError(f"negative speed {speed}", line=lineno)
        throttle = _opt_float(row, "throttle", lineno)
        brake = _opt_float(row, "brake", lineno)
        for name, v in (("throttle", throttle), ("brake", brake)):
            if v is not None and not 0.0 <= v <= 1.0:
                raise SchemaError(f"{name} {v} outside [0, 1]", line=lineno)
        samples.append(
            EgoSample(ts, speed, _opt_float(row, "accel_mps2", lineno), _opt_float(row, "steer_deg", lineno), throttle, brake)
        )
    samples.sort(key=lambda s: s.timestamp_us)
    for a, b in zip(samples, samples[1:]):
        if a.timestamp_us == b.timestamp_us:
            raise SchemaError(f"duplicate timestamp {a.timestamp_us}")
    return samples


def format_dynamics(samples: list[EgoSample]) -> str:
    def f(v, fmt):
        return "" if v is None else format(v, fmt)

    out = [",".join(DYNAMICS_COLUMNS)]
    for s in samples:
        out.append(
            f"{s.timestamp_us},{s.speed:.9f},{f(s.accel, '.9f')},{f(s.steer_deg, '.3f')},"
            f"{f(s.throttle, '.4f')},{f(s.brake, '.4f')}"
        )
    return "\n".join(out) + "\n"


def ego_speed_at(series: list[EgoSample], t_us: float) -> float:
    """Linear interpolation of ego speed at ``t_us``."""
    if not series:
        raise RangeError("empty dynamics series")
    times = [s.timestamp_us for s in series]
    if t_us < times[0] or t_us > times[-1]:
        raise RangeError(f"t={t_us} outside [{times[0]}, {times[-1]}]")
    i = bisect.bisect_left(times, t_us)
    if times[i] == t_us:
        return series[i].speed
    a, b = series[i - 1], series[i]
    frac = (t_us - a.timestamp_us) / (b.timestamp_us - a.timestamp_us)
    return a.speed + frac * (b.speed - a.speed)


def ego_accel_series(series: list[EgoSample], cutoff_hz: float = 1.0) -> np.ndarray:
    """Ego acceleration per sample: the logged column when complete, otherwise
    central differences of speed passed through a zero-phase low-pass filter."""
    if series and all(s.accel is not None for s in series):
        return np.array([s.accel for s in series])
    t = np.array([s.timestamp_us for s in series], dtype=float) * 1e-6
    v = np.array([s.speed for s in series])
    if len(v) < 3:
        return np.zeros(len(v))
    acc = np.gradient(v, t)
    fs = 1.0 / np.median(np.diff(t))
    if cutoff_hz < fs / 2 and len(acc) > 15:
        from scipy.signal import butter, filtfilt

        b, a = butter(2, cutoff_hz / (fs / 2))
        acc = filtfilt(b, a, acc, padlen=min(len(acc) - 1, 15))
    return acc


@dataclass(frozen=True)
class LaneConfig:
    lane_width: float = 3.5
    num_side_lanes: int = 1

    def __post_init__(self):
        if not self.lane_width > 0:
            raise ConfigError("lane_width must be positive")
        if self.num_side_lanes not in (0, 1):
            raise ConfigError("num_side_lanes must be 0 or 1")


def assign_lane(box, lanes: LaneConfig = LaneConfig()) -> str:
    """'ego', 'left', 'right' or 'outside' from the lateral centre of a box."""
    cy = box.box.cy if hasattr(box, "box") else box.cy
    half = lanes.lane_width / 2
    if abs(cy) <= half:
        return "ego"
    if lanes.num_side_lanes:
        if half < cy <= 3 * half:
            return "left"
        if -3 * half <= cy < -half:
            return "right"
    return "outside"


@dataclass(frozen=True)
class Neighbor:
    id: int
    gap: float
    rel_speed: float  # positive when the gap is closing
    speed: float  # absolute speed along the lane

    def to_dict(self) -> dict:
        return {"id": self.id, "gap": self.gap, "rel_speed": self.rel_speed, "speed": self.speed}


@dataclass(frozen=True)
class SceneSummary:
    timestamp_us: int
    leaders: dict  # lane -> Neighbor | None
    followers: dict

    def leader(self, lane: str = "ego") -> Neighbor | None:
        return self.leaders.get(lane)

    def follower(self, lane: str = "ego") -> Neighbor | None:
        return self.followers.get(lane)

    def records(self) -> list[dict]:
        return [
            {
                "timestamp_us": self.timestamp_us,
                "lane": lane,
                "leader": None if self.leaders[lane] is None else self.leaders[lane].to_dict(),
                "follower": None if self.followers[lane] is None else self.followers[lane].to_dict(),
            }
            for lane in LANES
        ]


MIN_GAP = 0.1


def bumper_gap(cx: float, own_length: float, other_length: float) -> float:
    return max(MIN_GAP, abs(cx) - 0.5 * (own_length + other_length))


def summarize_scene(
    tracks: list[TrackedBox],
    lanes: LaneConfig = LaneConfig(),
    ego_speed: float = 0.0,
    ego_length: float = 4.5,
    timestamp_us: int = 0,
) -> SceneSummary:
    """Nearest tracked vehicle ahead and behind in the ego and adjacent lanes.

    Track velocities are relative to the ego vehicle because detections are
    ego-centric, so a leader closes in when its vx is negative and a follower
    when its vx is positive.
    """
    by_lane: dict[str, list[TrackedBox]] = {lane: [] for lane in LANES}
    for tb in tracks:
        lane = assign_lane(tb, lanes)
        if lane in by_lane:
            by_lane[lane].append(tb)
    leaders, followers = {}, {}
    for lane, members in by_lane.items():
        ahead = [tb for tb in members if tb.box.cx > 0]
        behind = [tb for tb in members if tb.box.cx < 0]
        lead = min(ahead, key=lambda tb: (tb.box.cx, tb.id), default=None)
        foll = max(behind, key=lambda tb: (tb.box.cx, -tb.id), default=None)
        leaders[lane] = None if lead is None else Neighbor(
            lead.id, bumper_gap(lead.box.cx, ego_length, lead.box.l), -lead.vx, ego_speed + lead.vx
        )
        followers[lane] = None if foll is None else Neighbor(
            foll.id, bumper_gap(foll.box.cx, ego_length, foll.box.l), foll.vx, ego_speed + foll.vx
        )
    return SceneSummary(int(timestamp_us), leaders, followers)
