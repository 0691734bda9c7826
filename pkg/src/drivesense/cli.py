"""Command-line entry point.

Exit codes: 0 success, 2 configuration or input error, 3 stage or service error.
Flags given on the command line take precedence over values from ``--config``,
which take precedence over built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .bevmap import GridConfig, make_frgb, write_map
from .characterization import FitConfig, FollowSample, IdmBounds, correlate_params, parse_signal, sliding_estimation
from .characterization.fit import ParamSeries, WindowEstimate, FitResult
from .characterization.idm import IdmParams
from .detection import AzimuthConfig, ClusterDetector, OracleDetector, OdsClient, detect_full_azimuth_map, serve_ods
from .errors import ConfigError, DriveSenseError, ParseError, StageError
from .pipeline import DetectorSelection, _build, load_config, read_frame_index, run_pipeline
from .plots import emit_plots
from .pointcloud import PROFILES, decimate, format_frame, intersect_profiles, parse_frame
from .pointcloud.kitti import decimate_labels, parse_kitti_labels, read_kitti_calib
from .scenario import ScenarioSpec, generate_scenario, read_truth_tracks, self_check, write_scenario
from .scene import LaneConfig, ego_speed_at, parse_dynamics, summarize_scene
from .tracking import Frame, MotsClient, TrackerConfig, TrackerSession, serve_mots, update_frame

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 2, 3

PIPELINE_TEMPLATE = """\
# Pipeline configuration for a generated scenario.
seed = {seed}

[input]
frames = "frames/index.csv"
dynamics = "dynamics.csv"
physiology = "stress.csv"
truth = "truth_tracks.csv"

[output]
dir = "run"

[detector]
kind = "oracle"

[tracker]
# the oracle reports exact boxes, so trust measurements
meas_noise_sigma = 0.01

[idm]
window_s = 10.0
stride_s = 5.0
"""


def _read_toml(path: str | Path) -> dict:
    try:
        return tomllib.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _read_bytes(path: str | Path) -> bytes:
    try:
        return Path(path).read_bytes()
    except FileNotFoundError:
        raise ConfigError(f"input not found: {path}") from None


def _out_dir(args, default: str = ".") -> Path:
    out = Path(args.out_dir or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _section(args, name: str) -> dict:
    return dict(_read_toml(args.config).get(name, {})) if args.config else {}


def _make_detector(args):
    sel = DetectorSelection.parse(args.detector or "oracle")
    if sel.kind == "remote":
        return OdsClient(sel.endpoint, sel.timeout_s)
    if sel.kind == "cluster":
        return ClusterDetector()
    if not getattr(args, "truth", None):
        raise ConfigError("the oracle detector needs --truth")
    return OracleDetector(read_truth_tracks(args.truth), seed=args.seed or 0)


def _frame_time(path: str, frame_id: str | None, timestamp_us: int | None) -> tuple[str, int]:
    """Frame id and timestamp, falling back to an ``index.csv`` beside the file."""
    frame_id = frame_id or Path(path).stem
    if timestamp_us is not None:
        return frame_id, timestamp_us
    index = Path(path).parent / "index.csv"
    if index.exists():
        for e in read_frame_index(index):
            if e.path.name == Path(path).name:
                return e.frame_id, e.timestamp_us
    raise ConfigError(f"{path}: no timestamp; pass --timestamp-us")


def _load_cloud(path: str, frame_id: str | None, timestamp_us: int | None, fmt: str = "csv", profile=None):
    frame_id, timestamp_us = _frame_time(path, frame_id, timestamp_us)
    return parse_frame(
        _read_bytes(path), fmt, frame_id=frame_id, timestamp_us=timestamp_us, profile=profile
    )


def cmd_decimate(args) -> int:
    source, target = PROFILES[args.source], PROFILES[args.target]
    matches = intersect_profiles(source, target)
    fmt = "kitti-bin" if args.input.endswith(".bin") else "csv"
    cloud = _load_cloud(args.input, None, 1, fmt, source)  # timing is irrelevant to decimation
    out_cloud = decimate(cloud, matches, args.tol_deg)
    out = _out_dir(args)
    stem = Path(args.input).stem
    (out / f"{stem}.csv").write_text(format_frame(out_cloud))
    if args.labels:
        labels = parse_kitti_labels(_read_bytes(args.labels).decode())
        calib = read_kitti_calib(_read_bytes(args.calib).decode()) if args.calib else None
        kept = decimate_labels(labels, out_cloud, args.min_points, calib)
        (out / f"{stem}.txt").write_text("".join(lb.to_line() + "\n" for lb in kept))
    print(f"{len(matches)} matched channels; kept {len(out_cloud)} of {len(cloud)} points")
    return EXIT_OK


def cmd_bev(args) -> int:
    cloud = _load_cloud(args.input, args.frame_id, args.timestamp_us)
    grid = _build(GridConfig, _section(args, "grid"), "grid")
    m = make_frgb(cloud, grid)
    out = _out_dir(args)
    write_map(m, out / f"{cloud.frame_id}.png", out / f"{cloud.frame_id}.json")
    print(f"{int(m.occupied.sum())} occupied cells")
    return EXIT_OK


def cmd_detect(args) -> int:
    cloud = _load_cloud(args.input, args.frame_id, args.timestamp_us)
    grid = _build(GridConfig, _section(args, "grid"), "grid")
    try:
        dets = detect_full_azimuth_map(make_frgb(cloud, grid), _make_detector(args), AzimuthConfig(grid))
    except DriveSenseError as exc:
        raise StageError("detection", cloud.frame_id, exc) from exc
    doc = {"frame_id": cloud.frame_id, "timestamp_us": cloud.timestamp_us, "detections": [d.to_dict() for d in dets]}
    (_out_dir(args) / f"{cloud.frame_id}.detections.json").write_text(json.dumps(doc, sort_keys=True) + "\n")
    print(f"{len(dets)} detections")
    return EXIT_OK


def _jsonl(path: str) -> list[dict]:
    lines = _read_bytes(path).decode().splitlines()
    out = []
    for k, line in enumerate(lines, start=1):
        if line.strip():
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ParseError(str(exc), line=k) from None
    return out


def cmd_track(args) -> int:
    doc = _section(args, "tracker")
    endpoint = args.endpoint or doc.pop("endpoint", None)
    cfg = TrackerConfig.from_dict(doc)
    frames = []
    for d in _jsonl(args.input):
        frames.append(Frame.from_dict({"frame_id": d["frame_id"], "timestamp_us": d["timestamp_us"],
                                       "boxes": d.get("detections", d.get("boxes", []))}))
    lines = []
    if endpoint:
        client = MotsClient(endpoint)
        sid = client.create_session(cfg)
        try:
            for f in frames:
                lines.append(json.dumps(client.post_frame(sid, f).to_dict(), sort_keys=True))
        finally:
            client.close_session(sid)
    else:
        session = TrackerSession(cfg)
        for f in frames:
            try:
                lines.append(json.dumps(update_frame(session, f).to_dict(), sort_keys=True))
            except DriveSenseError as exc:
                raise StageError("tracking", f.frame_id, exc) from exc
    (_out_dir(args) / "tracks.jsonl").write_text("".join(line + "\n" for line in lines))
    print(f"tracked {len(frames)} frames")
    return EXIT_OK


def cmd_scene(args) -> int:
    lanes = _build(LaneConfig, _section(args, "lanes"), "lanes")
    dynamics = parse_dynamics(_read_bytes(args.dynamics))
    lines = []
    for d in _jsonl(args.input):
        frame = Frame.from_dict(d, tracked=True)
        summary = summarize_scene(
            list(frame.boxes), lanes, ego_speed_at(dynamics, frame.timestamp_us), args.ego_length, frame.timestamp_us
        )
        lines += [json.dumps(r, sort_keys=True) for r in summary.records()]
    (_out_dir(args) / "scene.jsonl").write_text("".join(line + "\n" for line in lines))
    print(f"{len(lines)} scene records")
    return EXIT_OK


def _read_samples(path: str) -> list[FollowSample]:
    import csv
    import io

    reader = csv.DictReader(io.StringIO(_read_bytes(path).decode()))
    if reader.fieldnames is None or not {"timestamp_us", "v", "s", "dv", "a_obs"} <= set(reader.fieldnames):
        raise ParseError("expected columns timestamp_us,v,s,dv,a_obs", line=1)
    out = []
    for k, row in enumerate(reader, start=2):
        try:
            out.append(FollowSample(int(row["timestamp_us"]), float(row["v"]), float(row["s"]),
                                    float(row["dv"]), float(row["a_obs"])))
        except (TypeError, ValueError) as exc:
            raise ParseError(str(exc), line=k) from None
    return out


def cmd_idm_fit(args) -> int:
    doc = _section(args, "idm")
    bounds = _build(IdmBounds, {k: tuple(v) for k, v in doc.pop("bounds", {}).items()}, "idm.bounds")
    fit = _build(FitConfig, {"seed": args.seed or 0, **doc.pop("fit", {})}, "idm.fit")
    window_s = args.window_s or doc.get("window_s", 10.0)
    stride_s = args.stride_s or doc.get("stride_s", 5.0)
    series = sliding_estimation(_read_samples(args.input), window_s, stride_s, bounds, fit)
    (_out_dir(args) / "params.csv").write_text(series.to_csv())
    print(f"{len(series)} windows fitted, {len(series.skipped)} skipped")
    return EXIT_OK


def _read_params(path: str) -> ParamSeries:
    import csv
    import io

    series = ParamSeries()
    reader = csv.DictReader(io.StringIO(_read_bytes(path).decode()))
    for k, row in enumerate(reader, start=2):
        try:
            t = int(row["t_center_us"])
            p = IdmParams(*(float(row[n]) for n in ("s0", "v0", "T", "a", "b")))
            flags = tuple(f for f in (row.get("flags") or "").split("|") if f)
            series.windows.append(WindowEstimate(t, t, 0, FitResult(p, float(row["sse"]), 0, flags)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(str(exc), line=k) from None
    return series


def cmd_correlate(args) -> int:
    corr = correlate_params(_read_params(args.params), parse_signal(_read_bytes(args.signal)), args.grid_hz)
    text = "param,r\n" + "".join(f"{k},{'' if v is None else f'{v:.9f}'}\n" for k, v in corr.items())
    (_out_dir(args) / "correlation.csv").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_pipeline(args) -> int:
    if not args.config:
        raise ConfigError("pipeline needs --config")
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out_dir:
        overrides["out_dir"] = Path(args.out_dir)
    if args.detector:
        overrides["detector"] = args.detector
    cfg = load_config(args.config, overrides)
    report = run_pipeline(cfg)
    print(
        f"processed {len(report['processed'])}/{report['frames_total']} frames, "
        f"{len(report['windows'])} estimation windows -> {cfg.out_dir}"
    )
    return EXIT_OK


def cmd_gen_scenario(args) -> int:
    doc = _read_toml(args.config) if args.config else {}
    doc = dict(doc.get("scenario", doc))
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.frames is not None:
        doc["frames"] = args.frames
    spec = ScenarioSpec.from_dict(doc)
    scn = generate_scenario(spec)
    residual = self_check(scn)
    if residual > 1e-6:
        raise StageError("gen-scenario", None, f"IDM self-check residual {residual:.3g}")
    out = _out_dir(args, "scenario")
    write_scenario(scn, out)
    (out / "pipeline.toml").write_text(PIPELINE_TEMPLATE.format(seed=spec.seed))
    print(f"wrote {spec.frames} frames to {out} (IDM residual {residual:.2g})")
    return EXIT_OK


def _serve(handle, name: str) -> int:
    print(f"{name} listening on {handle.url}", flush=True)
    try:
        handle.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        handle.close()
    return EXIT_OK


def cmd_serve_ods(args) -> int:
    return _serve(serve_ods(_make_detector(args), args.bind, start=False), "object detection service")


def cmd_serve_mots(args) -> int:
    return _serve(serve_mots(args.bind, start=False), "tracking service")


def cmd_plot(args) -> int:
    res = emit_plots(args.report, _out_dir(args, "plots"))
    for msg in res["notices"]:
        print(f"notice: {msg}")
    print(f"wrote {len(res['written'])} files")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML configuration file")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out-dir", default=None)
    common.add_argument("--detector", default=None, help="oracle | cluster | remote=URL")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="drivesense", description="Lidar perception and driver characterization toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("decimate", parents=[common], help="decimate a dense scan to a sparser sensor")
    s.add_argument("input")
    s.add_argument("--source", default="hdl64e", choices=sorted(PROFILES))
    s.add_argument("--target", default="puck", choices=sorted(PROFILES))
    s.add_argument("--tol-deg", type=float, default=0.5)
    s.add_argument("--labels")
    s.add_argument("--calib")
    s.add_argument("--min-points", type=int, default=1)
    s.set_defaults(func=cmd_decimate)

    for name, func, helptext in (("bev", cmd_bev, "rasterize a frame"), ("detect", cmd_detect, "detect vehicles")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("input")
        s.add_argument("--frame-id")
        s.add_argument("--timestamp-us", type=int, help="defaults to the entry in a sibling index.csv")
        if name == "detect":
            s.add_argument("--truth", help="truth tracks CSV for the oracle detector")
        s.set_defaults(func=func)

    s = sub.add_parser("track", parents=[common], help="track detections (JSON lines)")
    s.add_argument("input")
    s.add_argument("--endpoint", help="tracking service URL; in-process when omitted")
    s.set_defaults(func=cmd_track)

    s = sub.add_parser("scene", parents=[common], help="summarize tracked frames")
    s.add_argument("input")
    s.add_argument("--dynamics", required=True)
    s.add_argument("--ego-length", type=float, default=4.5)
    s.set_defaults(func=cmd_scene)

    s = sub.add_parser("idm-fit", parents=[common], help="sliding-window IDM estimation")
    s.add_argument("input", help="CSV timestamp_us,v,s,dv,a_obs")
    s.add_argument("--window-s", type=float)
    s.add_argument("--stride-s", type=float)
    s.set_defaults(func=cmd_idm_fit)

    s = sub.add_parser("correlate", parents=[common], help="correlate parameter series with a signal")
    s.add_argument("params")
    s.add_argument("signal")
    s.add_argument("--grid-hz", type=float, default=2.0)
    s.set_defaults(func=cmd_correlate)

    s = sub.add_parser("pipeline", parents=[common], help="run the full pipeline")
    s.set_defaults(func=cmd_pipeline)

    s = sub.add_parser("gen-scenario", parents=[common], help="generate a synthetic scenario")
    s.add_argument("--frames", type=int)
    s.set_defaults(func=cmd_gen_scenario)

    for name, func, default in (("serve-ods", cmd_serve_ods, "127.0.0.1:8081"), ("serve-mots", cmd_serve_mots, "127.0.0.1:8082")):
        s = sub.add_parser(name, parents=[common], help=f"run the {name[6:]} service")
        s.add_argument("--bind", default=default)
        if name == "serve-ods":
            s.add_argument("--truth")
        s.set_defaults(func=func)

    s = sub.add_parser("plot", parents=[common], help="plots from a run report")
    s.add_argument("report")
    s.set_defaults(func=cmd_plot)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (ConfigError, ParseError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DriveSenseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
