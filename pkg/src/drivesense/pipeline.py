"""End-to-end orchestration: point-cloud frames in, driver characterization out.

Per frame: load, optional ground removal and clustering, BEV rasterization,
full-azimuth detection, tracking and a scene summary. Afterwards the ego-lane
leader observables feed a sliding IDM estimation whose parameter series is
correlated with a physiological signal.

Configuration comes from a TOML document; command-line flags override file
values, which override the defaults below. Relative paths in the file resolve
against the file's directory.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import sys
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Iterator

import numpy as np

from .bevmap import GridConfig, make_frgb, write_map
from .characterization import (
    FitConfig,
    FollowSample,
    IdmBounds,
    ParamSeries,
    correlate_params,
    parse_signal,
    sliding_estimation,
)
from .detection import AzimuthConfig, ClusterDetector, Detection, OracleDetector, OdsClient, detect_full_azimuth_map
from .errors import ConfigError, DriveSenseError, ParseError, StageError
from .pointcloud import GroundConfig, cluster, parse_frame, remove_ground
from .scene import LaneConfig, ego_accel_series, ego_speed_at, parse_dynamics, summarize_scene
from .scenario import read_truth_tracks
from .tracking import Frame, MotsClient, TrackerConfig, TrackerSession, update_frame

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

DETECTOR_KINDS = ("oracle", "cluster", "remote")


@dataclass(frozen=True)
class DetectorSelection:
    kind: str = "oracle"
    endpoint: str | None = None
    timeout_s: float = 10.0
    position_sigma: float = 0.0
    yaw_sigma: float = 0.0
    extent_sigma: float = 0.0
    fp_rate: float = 0.0
    fp_slots: int = 0
    fn_rate: float = 0.0
    min_support_cells: int = 1
    min_cells: int = 3
    iou_thresh: float = 0.3
    margin_m: float = 0.0
    quantize: bool = False

    def __post_init__(self):
        if self.kind not in DETECTOR_KINDS:
            raise ConfigError(f"detector kind must be one of {', '.join(DETECTOR_KINDS)}, got {self.kind!r}")
        if (self.kind == "remote") != (self.endpoint is not None):
            raise ConfigError("an endpoint is required for, and only for, the remote detector")

    @classmethod
    def parse(cls, text: str, base: "DetectorSelection | None" = None) -> "DetectorSelection":
        """``oracle``, ``cluster`` or ``remote=URL`` as given on the command line."""
        base = base or cls()
        kind, _, url = text.partition("=")
        if kind == "remote":
            if not url:
                raise ConfigError("remote detector needs a URL: remote=http://host:port")
            return replace(base, kind="remote", endpoint=url)
        if url:
            raise ConfigError(f"detector {kind!r} takes no argument")
        return replace(base, kind=kind, endpoint=None)


@dataclass(frozen=True)
class EstimationConfig:
    window_s: float = 10.0
    stride_s: float = 5.0
    bounds: IdmBounds = field(default_factory=IdmBounds)
    fit: FitConfig = field(default_factory=FitConfig)
    # leader segments shorter than this are not differentiated
    min_segment: int = 3


@dataclass(frozen=True)
class PipelineConfig:
    frames: Path
    dynamics: Path
    out_dir: Path
    physiology: Path | None = None
    truth: Path | None = None
    seed: int = 0
    grid: GridConfig = field(default_factory=GridConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    tracker_endpoint: str | None = None
    lanes: LaneConfig = field(default_factory=LaneConfig)
    ego_length: float = 4.5
    detector: DetectorSelection = field(default_factory=DetectorSelection)
    ground_removal: bool = False
    ground: GroundConfig = field(default_factory=GroundConfig)
    clustering: bool = False
    cluster_eps_m: float = 0.5
    cluster_min_size: int = 5
    estimation: EstimationConfig = field(default_factory=EstimationConfig)
    correlation: bool = True
    correlation_grid_hz: float = 2.0
    workers: int = 1
    queue_size: int = 8
    write_maps: bool = False

    def validate(self) -> None:
        """Check the run can start: every referenced input exists."""
        required = [("frames", self.frames), ("dynamics", self.dynamics)]
        if self.correlation:
            if self.physiology is None:
                raise ConfigError("correlation is enabled but no physiology file is configured")
            required.append(("physiology", self.physiology))
        if self.detector.kind == "oracle":
            if self.truth is None:
                raise ConfigError("the oracle detector needs a truth file")
            required.append(("truth", self.truth))
        for name, path in required:
            if not Path(path).exists():
                raise ConfigError(f"{name} path does not exist: {path}")
        if self.workers < 1 or self.queue_size < 1:
            raise ConfigError("workers and queue_size must be >= 1")


def _build(cls, d: dict | None, section: str):
    d = dict(d or {})
    unknown = set(d) - {f.name for f in fields(cls)}
    if unknown:
        raise ConfigError(f"unknown option(s) in [{section}]: {', '.join(sorted(unknown))}")
    try:
        return cls(**d)
    except TypeError as exc:
        raise ConfigError(f"[{section}]: {exc}") from None


def config_from_dict(doc: dict, base_dir: Path | str = ".", overrides: dict | None = None) -> PipelineConfig:
    """Build a config from a parsed TOML document plus flag overrides.

    Recognised tables: [input] frames/dynamics/physiology/truth, [output] dir
    and write_maps, [grid], [tracker] (plus ``endpoint``), [lanes], [scene]
    ego_length, [detector], [stages] ground_removal/clustering/correlation,
    [ground], [clustering] eps_m/min_size, [idm] window_s/stride_s/min_segment,
    [idm.fit], [idm.bounds], [correlation] grid_hz, [runtime] workers/queue_size,
    and a top-level ``seed``. Overrides: seed, out_dir, detector (flag text).
    """
    base = Path(base_dir)
    doc = dict(doc)
    overrides = overrides or {}
    known = {"input", "output", "grid", "tracker", "lanes", "scene", "detector", "stages", "ground",
             "clustering", "idm", "correlation", "runtime", "seed"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config table(s): {', '.join(sorted(unknown))}")

    def path(value) -> Path | None:
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else base / p

    inp = dict(doc.get("input", {}))
    out = dict(doc.get("output", {}))
    for key in ("frames", "dynamics"):
        if key not in inp:
            raise ConfigError(f"[input] {key} is required")
    out_dir = overrides.get("out_dir") or path(out.get("dir"))
    if out_dir is None:
        raise ConfigError("an output directory is required ([output] dir or --out-dir)")

    tracker_doc = dict(doc.get("tracker", {}))
    tracker_endpoint = tracker_doc.pop("endpoint", None)
    det = _build(DetectorSelection, doc.get("detector"), "detector")
    if overrides.get("detector"):
        det = DetectorSelection.parse(overrides["detector"], det)

    idm_doc = dict(doc.get("idm", {}))
    bounds = {k: tuple(v) for k, v in idm_doc.pop("bounds", {}).items()}
    seed = overrides.get("seed", doc.get("seed", 0))
    fit_doc = {"seed": seed, **idm_doc.pop("fit", {})}
    estimation = _build(EstimationConfig, idm_doc, "idm")
    estimation = replace(
        estimation, bounds=_build(IdmBounds, bounds, "idm.bounds"), fit=_build(FitConfig, fit_doc, "idm.fit")
    )

    stages = dict(doc.get("stages", {}))
    clustering = dict(doc.get("clustering", {}))
    runtime = dict(doc.get("runtime", {}))
    extra = set(stages) - {"ground_removal", "clustering", "correlation"}
    extra |= set(clustering) - {"eps_m", "min_size"}
    extra |= set(runtime) - {"workers", "queue_size"}
    extra |= set(out) - {"dir", "write_maps"}
    extra |= set(inp) - {"frames", "dynamics", "physiology", "truth"}
    extra |= set(doc.get("scene", {})) - {"ego_length"}
    extra |= set(doc.get("correlation", {})) - {"grid_hz"}
    if extra:
        raise ConfigError(f"unknown option(s): {', '.join(sorted(extra))}")

    return PipelineConfig(
        frames=path(inp["frames"]),
        dynamics=path(inp["dynamics"]),
        physiology=path(inp.get("physiology")),
        truth=path(inp.get("truth")),
        out_dir=Path(out_dir),
        seed=int(seed),
        grid=_build(GridConfig, doc.get("grid"), "grid"),
        tracker=TrackerConfig.from_dict(tracker_doc),
        tracker_endpoint=tracker_endpoint,
        lanes=_build(LaneConfig, doc.get("lanes"), "lanes"),
        ego_length=float(doc.get("scene", {}).get("ego_length", 4.5)),
        detector=det,
        ground_removal=bool(stages.get("ground_removal", False)),
        ground=_build(GroundConfig, {"seed": seed, **doc.get("ground", {})}, "ground"),
        clustering=bool(stages.get("clustering", False)),
        cluster_eps_m=float(clustering.get("eps_m", 0.5)),
        cluster_min_size=int(clustering.get("min_size", 5)),
        estimation=estimation,
        correlation=bool(stages.get("correlation", True)),
        correlation_grid_hz=float(doc.get("correlation", {}).get("grid_hz", 2.0)),
        workers=int(runtime.get("workers", 1)),
        queue_size=int(runtime.get("queue_size", 8)),
        write_maps=bool(out.get("write_maps", False)),
    )


def load_config(path: str | Path, overrides: dict | None = None) -> PipelineConfig:
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(doc, path.parent, overrides)


@dataclass(frozen=True)
class FrameEntry:
    index: int  # 1-based position in the frame list
    frame_id: str
    timestamp_us: int
    path: Path


def read_frame_index(path: str | Path) -> list[FrameEntry]:
    """Frame list CSV ``frame_id,timestamp_us,file``; files resolve next to it.

    A directory is taken to contain ``index.csv``.
    """
    path = Path(path)
    if path.is_dir():
        path = path / "index.csv"
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"frame_id", "timestamp_us", "file"} <= set(reader.fieldnames):
            raise ConfigError(f"{path}: expected columns frame_id,timestamp_us,file")
        entries = []
        for k, row in enumerate(reader, start=1):
            try:
                entries.append(FrameEntry(k, row["frame_id"], int(row["timestamp_us"]), path.parent / row["file"]))
            except ValueError as exc:
                raise ConfigError(f"{path} line {k + 1}: {exc}") from None
    return entries


def make_detector(cfg: PipelineConfig):
    sel = cfg.detector
    if sel.kind == "remote":
        return OdsClient(sel.endpoint, sel.timeout_s)
    if sel.kind == "cluster":
        return ClusterDetector(min_cells=sel.min_cells)
    return OracleDetector(
        read_truth_tracks(cfg.truth),
        position_sigma=sel.position_sigma,
        yaw_sigma=sel.yaw_sigma,
        extent_sigma=sel.extent_sigma,
        fp_rate=sel.fp_rate,
        fp_slots=sel.fp_slots,
        fn_rate=sel.fn_rate,
        min_support_cells=sel.min_support_cells,
        seed=cfg.seed,
    )


class _Tracker:
    """In-process session or a session on a remote tracking service."""

    def __init__(self, cfg: PipelineConfig):
        self._client = None
        if cfg.tracker_endpoint:
            self._client = MotsClient(cfg.tracker_endpoint)
            self._sid = self._client.create_session(cfg.tracker)
        else:
            self._session = TrackerSession(cfg.tracker)

    def update(self, frame: Frame) -> Frame:
        if self._client is not None:
            return self._client.post_frame(self._sid, frame)
        return update_frame(self._session, frame)

    def close(self) -> None:
        if self._client is not None:
            self._client.close_session(self._sid)


@dataclass
class _Detected:
    entry: FrameEntry
    detections: list[Detection] | None = None
    dropped: str | None = None
    n_points: int = 0


def _detect_frame(entry: FrameEntry, cfg: PipelineConfig, detector, az: AzimuthConfig) -> _Detected:
    stage = "load"
    try:
        try:
            cloud = parse_frame(entry.path.read_bytes(), frame_id=entry.frame_id, timestamp_us=entry.timestamp_us)
        except (OSError, ParseError) as exc:
            return _Detected(entry, dropped=f"load: {exc}")
        if cfg.ground_removal:
            stage = "ground_removal"
            cloud = remove_ground(cloud, cfg.ground).cloud
        if cfg.clustering:
            stage = "clustering"
            groups = cluster(cloud, cfg.cluster_eps_m, cfg.cluster_min_size)
            cloud = cloud.select(np.sort(np.concatenate(groups)) if groups else np.zeros(0, dtype=int))
        stage = "bev"
        bev = make_frgb(cloud, cfg.grid)
        if cfg.write_maps:
            maps = cfg.out_dir / "maps"
            write_map(bev, maps / f"{entry.frame_id}.png", maps / f"{entry.frame_id}.json")
        stage = "detection"
        dets = detect_full_azimuth_map(bev, detector, az)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(stage, entry.frame_id, exc) from exc
    return _Detected(entry, dets, n_points=len(cloud))


def _prefetch(entries: list[FrameEntry], fn, workers: int, depth: int) -> Iterator:
    """Apply ``fn`` to entries with at most ``depth`` results in flight, yielding in order."""
    if workers <= 1:
        for e in entries:
            yield fn(e)
        return
    with ThreadPoolExecutor(workers) as pool:
        pending: deque = deque()
        it = iter(entries)
        try:
            for e in it:
                pending.append(pool.submit(fn, e))
                if len(pending) >= depth:
                    yield pending.popleft().result()
            while pending:
                yield pending.popleft().result()
        finally:
            for fut in pending:
                fut.cancel()


def leader_follow_samples(
    summaries: list[tuple[int, int | None, float | None]],
    dynamics,
    min_segment: int = 3,
) -> list[FollowSample]:
    """IDM observables from per-frame ego-lane leader gaps.

    ``summaries`` holds (timestamp_us, leader id or None, gap). Speed and
    acceleration come from the vehicle dynamics at each timestamp. Closing
    speed is the negated time derivative of the gap, taken by central
    differences within runs of frames that keep the same leader, so a
    change of leader never produces a spurious spike.
    """
    times = np.array([s.timestamp_us for s in dynamics], dtype=float)
    accel = ego_accel_series(dynamics)
    out: list[FollowSample] = []
    k = 0
    while k < len(summaries):
        lid = summaries[k][1]
        j = k
        while j < len(summaries) and summaries[j][1] == lid:
            j += 1
        if lid is not None and j - k >= min_segment:
            seg = summaries[k:j]
            t = np.array([s[0] for s in seg], dtype=float)
            gap = np.array([s[2] for s in seg])
            closing = -np.gradient(gap, t * 1e-6, edge_order=2)
            for (ts, _, s), dv in zip(seg, closing):
                if times[0] <= ts <= times[-1]:
                    v = ego_speed_at(dynamics, ts)
                    out.append(FollowSample(int(ts), float(v), float(s), float(dv), float(np.interp(ts, times, accel))))
        k = j
    return out


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, allow_nan=False) + "\n"


def _series_rows(series: ParamSeries) -> list[dict]:
    return [
        {
            "t_start_us": w.t_start_us,
            "t_end_us": w.t_end_us,
            "t_center_us": w.t_center_us,
            "n_samples": w.n_samples,
            "params": w.result.params.as_dict(),
            "sse": w.result.sse,
            "flags": list(w.result.flags),
        }
        for w in series.windows
    ]


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Run every stage and write artifacts into ``cfg.out_dir``.

    Returns the report (also written as ``report.json``). A stage failure stops
    processing: the report then has ``status = "failed"`` and an ``error`` entry
    naming the stage and frame, and a :class:`StageError` is raised after the
    artifacts are flushed. Frames whose file cannot be read or parsed are
    dropped with the reason and processing continues.
    """
    cfg.validate()
    entries = read_frame_index(cfg.frames)
    dynamics = parse_dynamics(Path(cfg.dynamics).read_bytes())
    physiology = parse_signal(Path(cfg.physiology).read_bytes()) if cfg.correlation else None
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    detector = make_detector(cfg)
    workers = cfg.workers if getattr(detector, "thread_safe", False) else 1
    az = AzimuthConfig(cfg.grid, cfg.detector.iou_thresh, cfg.detector.margin_m, cfg.detector.quantize)

    processed: list[str] = []
    dropped: list[dict] = []
    error: dict | None = None
    failure: StageError | None = None
    det_lines, track_lines, scene_lines = [], [], []
    leader_obs: list[tuple[int, int | None, float | None]] = []
    tracked_positions: dict[str, list[dict]] = {}

    tracker = None
    done: set[str] = set()
    try:
        try:
            tracker = _Tracker(cfg)
        except DriveSenseError as exc:
            raise StageError("tracking", None, exc) from exc
        for item in _prefetch(entries, lambda e: _detect_frame(e, cfg, detector, az), workers, cfg.queue_size):
            e = item.entry
            done.add(e.frame_id)
            if item.dropped is not None:
                dropped.append({"frame_id": e.frame_id, "reason": item.dropped})
                continue
            det_lines.append(_dump({"frame_id": e.frame_id, "timestamp_us": e.timestamp_us,
                                    "detections": [d.to_dict() for d in item.detections]}))
            try:
                tracked = tracker.update(Frame(e.frame_id, e.timestamp_us, item.detections))
            except DriveSenseError as exc:
                raise StageError("tracking", e.frame_id, exc) from exc
            track_lines.append(_dump(tracked.to_dict()))
            tracked_positions[e.frame_id] = [b.to_dict() for b in tracked.boxes]
            try:
                ego_v = ego_speed_at(dynamics, e.timestamp_us)
                summary = summarize_scene(list(tracked.boxes), cfg.lanes, ego_v, cfg.ego_length, e.timestamp_us)
            except DriveSenseError as exc:
                raise StageError("scene", e.frame_id, exc) from exc
            scene_lines += [_dump(r) for r in summary.records()]
            lead = summary.leader("ego")
            leader_obs.append((e.timestamp_us, None if lead is None else lead.id, None if lead is None else lead.gap))
            processed.append(e.frame_id)
    except StageError as exc:
        failure = exc
        index = next((e.index for e in entries if e.frame_id == exc.frame_id), None)
        error = {"stage": exc.stage, "frame_id": exc.frame_id, "frame_index": index, "message": str(exc.cause)}
        if exc.frame_id is not None:
            done.add(exc.frame_id)
            dropped.append({"frame_id": exc.frame_id, "reason": f"{exc.stage}: {exc.cause}"})
        log.error("%s", exc)
    finally:
        if tracker is not None:
            try:
                tracker.close()
            except DriveSenseError as exc:
                log.warning("could not close tracker session: %s", exc)
    for e in entries:
        if e.frame_id not in done:
            dropped.append({"frame_id": e.frame_id, "reason": "not processed: run aborted"})

    samples = leader_follow_samples(leader_obs, dynamics, cfg.estimation.min_segment) if failure is None else []
    est = cfg.estimation
    series = sliding_estimation(samples, est.window_s, est.stride_s, est.bounds, est.fit) if samples else ParamSeries()
    correlation = None
    if cfg.correlation and failure is None:
        correlation = correlate_params(series, physiology, cfg.correlation_grid_hz)

    (out / "detections.jsonl").write_text("".join(det_lines))
    (out / "tracks.jsonl").write_text("".join(track_lines))
    (out / "scene.jsonl").write_text("".join(scene_lines))
    buf = io.StringIO()
    buf.write("timestamp_us,v,s,dv,a_obs\n")
    for s in samples:
        buf.write(f"{s.timestamp_us},{s.v:.9g},{s.s:.9g},{s.dv:.9g},{s.a_obs:.9g}\n")
    (out / "follow_samples.csv").write_text(buf.getvalue())
    (out / "params.csv").write_text(series.to_csv())
    if correlation is not None:
        (out / "correlation.csv").write_text(
            "param,r\n" + "".join(f"{k},{'' if v is None else f'{v:.9f}'}\n" for k, v in correlation.items())
        )

    report = {
        "status": "failed" if failure else "ok",
        "error": error,
        "frames_total": len(entries),
        "processed": processed,
        "dropped": dropped,
        "follow_samples": len(samples),
        "windows": _series_rows(series),
        "skipped_windows": [
            {"t_start_us": w.t_start_us, "t_end_us": w.t_end_us, "n_samples": w.n_samples, "reason": w.reason}
            for w in series.skipped
        ],
        "correlation": correlation,
        "physiology": None if physiology is None else {
            "times_us": physiology.times_us.tolist(), "values": physiology.values.tolist()
        },
        "config": _jsonable(asdict(cfg)),
    }
    # keep reports comparable across output locations
    report["config"]["out_dir"] = "."
    (out / "report.json").write_text(json.dumps(report, sort_keys=True, indent=1, allow_nan=False) + "\n")
    if failure is not None:
        raise failure
    return report
