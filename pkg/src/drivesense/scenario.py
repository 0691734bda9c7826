"""Deterministic synthetic driving scenarios with rendered Lidar sweeps.

The ego vehicle follows a scripted leader under the IDM; other vehicles drive
straight along their lanes with scripted speed profiles. Each frame is ray cast
against box-shaped vehicles and an optional flat ground using the ring layout
of the chosen sensor, and every intermediate quantity is written out as ground
truth.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .characterization.correlation import SignalSeries, format_signal
from .characterization.idm import IdmParams, LeaderProfile, idm_accel, integrate_follower
from .detection.types import Detection
from .errors import ConfigError, ScenarioError
from .geometry import OrientedBox, intersection_area
from .pointcloud import PROFILES, PointCloud, SensorProfile
from .pointcloud.io import format_frame
from .scene import EgoSample, format_dynamics

CLASS_HEIGHT = {"car": 1.5, "van": 2.1, "truck": 3.0}


@dataclass(frozen=True)
class VehicleSpec:
    lane_offset: float
    x0: float  # initial longitudinal centre offset from the ego centre (m)
    speeds: tuple[tuple[float, float], ...] = ((20.0, 1e6),)  # (speed, hold seconds) levels
    length: float = 4.5
    width: float = 1.8
    cls: str = "car"
    ramp_accel: float = 2.0

    def profile(self) -> LeaderProfile:
        return LeaderProfile.steps(list(self.speeds), ramp_accel=self.ramp_accel)


@dataclass(frozen=True)
class ScenarioSpec:
    seed: int = 0
    frames: int = 100
    rate_hz: float = 10.0
    t0_us: int = 1_600_000_000_000_000
    sensor: str = "puck"
    sensor_height: float = 1.73
    azimuth_step_deg: float = 0.4
    max_range: float = 100.0
    range_noise_sigma: float = 0.01
    ground: bool = True
    ego_params: IdmParams = field(default_factory=IdmParams)
    ego_speed: float = 22.0
    ego_length: float = 4.5
    ego_width: float = 1.8
    leader: VehicleSpec | None = field(
        default_factory=lambda: VehicleSpec(0.0, 34.5, ((16.0, 1.0), (6.0, 0.5), (20.0, 0.0)))
    )
    others: tuple[VehicleSpec, ...] = (
        VehicleSpec(3.5, 8.0, ((20.0, 2.0), (10.0, 2.0), (13.0, 0.0)), length=4.8, width=1.9, cls="van"),
        VehicleSpec(-3.5, -15.0, ((22.0, 1.0), (9.0, 1.0), (12.0, 0.0))),
        VehicleSpec(3.5, -22.0, ((21.0, 1.5), (9.0, 3.0), (11.0, 0.0)), length=8.0, width=2.5, cls="truck"),
    )
    stress_rate_hz: float = 4.0

    @property
    def dt(self) -> float:
        return 1.0 / self.rate_hz

    def profile(self) -> SensorProfile:
        try:
            return PROFILES[self.sensor.lower()]
        except KeyError:
            raise ConfigError(f"unknown sensor profile {self.sensor!r}") from None

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        d = dict(d)
        if "ego_params" in d:
            d["ego_params"] = IdmParams(**d["ego_params"])
        if "leader" in d:
            d["leader"] = None if d["leader"] in (None, False, {}) else _vehicle(d["leader"])
        if "others" in d:
            d["others"] = tuple(_vehicle(v) for v in d["others"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown scenario option(s): {', '.join(sorted(unknown))}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def _vehicle(d: dict) -> VehicleSpec:
    d = dict(d)
    if "speeds" in d:
        d["speeds"] = tuple(tuple(float(x) for x in lv) for lv in d["speeds"])
    return VehicleSpec(**d)


@dataclass(frozen=True)
class TruthVehicle:
    id: int
    cls: str
    box: OrientedBox  # ego frame
    height: float
    vx: float  # relative to the ego
    vy: float


@dataclass
class Scenario:
    spec: ScenarioSpec
    times_us: list[int]
    clouds: list[PointCloud]
    truth: list[list[TruthVehicle]]
    dynamics: list[EgoSample]
    leader_gap: np.ndarray  # bumper gap to the scripted leader per frame (nan when absent)
    leader_closing: np.ndarray
    stress: SignalSeries

    @property
    def frame_ids(self) -> list[str]:
        return [c.frame_id for c in self.clouds]

    def truth_detections(self) -> dict[str, list[Detection]]:
        return {
            fid: [Detection(v.box, v.cls, 1.0) for v in vehicles] for fid, vehicles in zip(self.frame_ids, self.truth)
        }


def _ray_box_hits(origin_dirs: np.ndarray, box: OrientedBox, z_lo: float, z_hi: float) -> np.ndarray:
    """Entry distance of unit rays from the origin into a z-extruded box (inf on miss)."""
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    d = origin_dirs
    # ray origin and direction in the box frame
    ox, oy = -(c * box.cx + s * box.cy), -(-s * box.cx + c * box.cy)
    dx = c * d[:, 0] + s * d[:, 1]
    dy = -s * d[:, 0] + c * d[:, 1]
    dz = d[:, 2]
    t_near = np.zeros(len(d))
    t_far = np.full(len(d), np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        for o, dd, lo, hi in ((ox, dx, -box.l / 2, box.l / 2), (oy, dy, -box.w / 2, box.w / 2), (0.0, dz, z_lo, z_hi)):
            t1 = (lo - o) / dd
            t2 = (hi - o) / dd
            tmin = np.where(dd == 0, np.where((o >= lo) & (o <= hi), -np.inf, np.inf), np.minimum(t1, t2))
            tmax = np.where(dd == 0, np.where((o >= lo) & (o <= hi), np.inf, -np.inf), np.maximum(t1, t2))
            t_near = np.maximum(t_near, tmin)
            t_far = np.minimum(t_far, tmax)
    return np.where((t_near <= t_far) & (t_near > 0), t_near, np.inf)


def render_cloud(
    spec: ScenarioSpec, vehicles: list[TruthVehicle], rng: np.random.Generator, frame_id: str, timestamp_us: int
) -> PointCloud:
    profile = spec.profile()
    elev = np.radians(np.asarray(profile.channel_angles))
    az = np.radians(np.arange(0.0, 360.0, spec.azimuth_step_deg))
    ring, azi = np.meshgrid(np.arange(len(elev)), np.arange(len(az)), indexing="ij")
    ring, azi = ring.ravel(), azi.ravel()
    ce = np.cos(elev[ring])
    dirs = np.column_stack([ce * np.cos(az[azi]), ce * np.sin(az[azi]), np.sin(elev[ring])])

    t_hit = np.full(len(dirs), np.inf)
    intensity = np.zeros(len(dirs))
    ground_z = -spec.sensor_height
    if spec.ground:
        with np.errstate(divide="ignore"):
            tg = np.where(dirs[:, 2] < 0, ground_z / dirs[:, 2], np.inf)
        t_hit = tg
        intensity = np.full(len(dirs), 20.0)
    for k, veh in enumerate(vehicles):
        tv = _ray_box_hits(dirs, veh.box, ground_z, ground_z + veh.height)
        closer = tv < t_hit
        t_hit = np.where(closer, tv, t_hit)
        intensity = np.where(closer, 60.0 + 25.0 * (veh.id % 6), intensity)

    noise = rng.normal(0.0, spec.range_noise_sigma, size=len(dirs))
    inten_noise = rng.normal(0.0, 3.0, size=len(dirs))
    keep = np.isfinite(t_hit) & (t_hit <= spec.max_range)
    rng_m = t_hit[keep] + noise[keep]
    xyz = dirs[keep] * rng_m[:, None]
    return PointCloud(
        xyz,
        np.clip(intensity[keep] + inten_noise[keep], 0.0, 255.0),
        ring[keep],
        np.asarray(profile.channel_angles)[ring[keep]],
        timestamp_us,
        frame_id,
    )


def _check_collisions(vehicles: list[TruthVehicle], ego_box: OrientedBox, frame: int) -> None:
    boxes = [("ego", ego_box)] + [(f"vehicle {v.id}", v.box) for v in vehicles]
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            if intersection_area(boxes[i][1], boxes[j][1]) > 0:
                raise ScenarioError(f"{boxes[i][0]} and {boxes[j][0]} collide at frame {frame}")


def generate_scenario(spec: ScenarioSpec = ScenarioSpec()) -> Scenario:
    """Build every frame of ``spec``. Trajectories depend only on the spec; the
    seed drives sensor noise and the stress signal."""
    n, dt = spec.frames, spec.dt
    t = np.arange(n) * dt
    times_us = [spec.t0_us + int(round(x * 1e6)) for x in t]

    if spec.leader is not None:
        lead = spec.leader
        s_init = lead.x0 - 0.5 * (lead.length + spec.ego_length)
        if s_init <= 0:
            raise ScenarioError("leader starts overlapping the ego vehicle")
        traj = integrate_follower(spec.ego_params, lead.profile(), spec.ego_speed, s_init, dt, n)
        ego_x, ego_v, ego_a = traj.distance, traj.v, traj.accel
        gap, closing = traj.s, traj.dv
    else:
        ego_v = np.full(n, spec.ego_speed)
        ego_x, ego_a = spec.ego_speed * t, np.zeros(n)
        gap = closing = np.full(n, np.nan)

    scripted = ([spec.leader] if spec.leader is not None else []) + list(spec.others)
    world = []
    for vid, veh in enumerate(scripted, start=1):
        prof = veh.profile()
        world.append((vid, veh, veh.x0 + np.asarray(prof.position(t)), np.asarray(prof.speed(t))))

    ego_box = OrientedBox(0.0, 0.0, spec.ego_width, spec.ego_length, 0.0)
    rng = np.random.default_rng(spec.seed)
    clouds, truth = [], []
    for k in range(n):
        vehicles = [
            TruthVehicle(vid, veh.cls, OrientedBox(float(x[k] - ego_x[k]), veh.lane_offset, veh.width, veh.length, 0.0),
                         CLASS_HEIGHT[veh.cls], float(v[k] - ego_v[k]), 0.0)
            for vid, veh, x, v in world
        ]
        _check_collisions(vehicles, ego_box, k)
        truth.append(vehicles)
        clouds.append(render_cloud(spec, vehicles, rng, f"{k:06d}", times_us[k]))

    dynamics = [
        EgoSample(
            times_us[k], float(ego_v[k]), float(ego_a[k]), 0.0,
            float(min(1.0, max(0.0, ego_a[k]) / 2.0)), float(min(1.0, max(0.0, -ego_a[k]) / 4.0)),
        )
        for k in range(n)
    ]

    stress_t = np.arange(0.0, n * dt + 1e-9, 1.0 / spec.stress_rate_hz)
    stress_v = 0.5 + 0.3 * np.sin(2 * math.pi * stress_t / 8.0) + rng.normal(0.0, 0.05, size=len(stress_t))
    stress = SignalSeries(spec.t0_us + np.round(stress_t * 1e6).astype(np.int64), stress_v)
    return Scenario(spec, times_us, clouds, truth, dynamics, np.asarray(gap), np.asarray(closing), stress)


def self_check(scn: Scenario) -> float:
    """Largest |accel - IDM(v, s, dv)| over frames with a leader, using the emitted data."""
    if scn.spec.leader is None:
        return 0.0
    v = np.array([d.speed for d in scn.dynamics])
    a = np.array([d.accel for d in scn.dynamics])
    model = idm_accel(scn.spec.ego_params, v, scn.leader_gap, scn.leader_closing)
    moving = ~((v <= 0) & (model < 0))
    return float(np.max(np.abs(a - model)[moving])) if moving.any() else 0.0


def write_scenario(scn: Scenario, out_dir: str | Path) -> dict[str, Path]:
    """Write frames, dynamics, stress and ground truth; returns the written paths."""
    out = Path(out_dir)
    frames_dir = out / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    index = io.StringIO()
    index.write("frame_id,timestamp_us,file\n")
    for cloud in scn.clouds:
        name = f"{cloud.frame_id}.csv"
        (frames_dir / name).write_text(format_frame(cloud))
        index.write(f"{cloud.frame_id},{cloud.timestamp_us},{name}\n")
    (frames_dir / "index.csv").write_text(index.getvalue())
    (out / "dynamics.csv").write_text(format_dynamics(scn.dynamics))
    (out / "stress.csv").write_text(format_signal(scn.stress))

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["frame_id", "timestamp_us", "id", "cls", "cx", "cy", "w", "l", "yaw", "vx", "vy"])
    for fid, ts, vehicles in zip(scn.frame_ids, scn.times_us, scn.truth):
        for v in vehicles:
            b = v.box
            w.writerow([fid, ts, v.id, v.cls, f"{b.cx:.9f}", f"{b.cy:.9f}", f"{b.w:.6f}", f"{b.l:.6f}",
                        f"{b.yaw:.9f}", f"{v.vx:.9f}", f"{v.vy:.9f}"])
    (out / "truth_tracks.csv").write_text(buf.getvalue())

    buf = io.StringIO()
    buf.write("timestamp_us,gap_m,closing_mps\n")
    for ts, g, c in zip(scn.times_us, scn.leader_gap, scn.leader_closing):
        buf.write(f"{ts},{g:.9f},{c:.9f}\n")
    (out / "truth_leader.csv").write_text(buf.getvalue())
    (out / "truth_params.json").write_text(
        json.dumps({"ego_params": scn.spec.ego_params.as_dict(), "delta": scn.spec.ego_params.delta}, indent=1) + "\n"
    )
    return {
        "frames": frames_dir / "index.csv",
        "dynamics": out / "dynamics.csv",
        "stress": out / "stress.csv",
        "truth_tracks": out / "truth_tracks.csv",
        "truth_leader": out / "truth_leader.csv",
        "truth_params": out / "truth_params.json",
    }


def read_truth_tracks(path: str | Path) -> dict[str, list[Detection]]:
    out: dict[str, list[Detection]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            box = OrientedBox(float(row["cx"]), float(row["cy"]), float(row["w"]), float(row["l"]), float(row["yaw"]))
            out.setdefault(row["frame_id"], []).append(Detection(box, row["cls"], 1.0))
    return out
