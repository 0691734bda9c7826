"""Point-cloud file formats.

``csv``: header ``x,y,z,intensity,ring[,vertical_angle]``, one point per row.
``kitti-bin``: packed little-endian float32 quadruples (x, y, z, reflectance in [0, 1]).
"""

from __future__ import annotations

import csv
import io
import math

import numpy as np

from ..errors import ParseError, SchemaError
from .cloud import PointCloud, vertical_angles

REQUIRED_COLUMNS = ("x", "y", "z", "intensity", "ring")
CSV_COLUMNS = REQUIRED_COLUMNS + ("vertical_angle",)


def parse_frame(data: bytes | str, fmt: str = "csv", *, frame_id: str, timestamp_us: int,
                profile=None) -> PointCloud:
    if fmt == "csv":
        return _parse_csv(data, frame_id=frame_id, timestamp_us=timestamp_us)
    if fmt == "kitti-bin":
        return _parse_kitti_bin(data, frame_id=frame_id, timestamp_us=timestamp_us, profile=profile)
    raise ValueError(f"unknown point-cloud format {fmt!r}")


def _parse_csv(data, *, frame_id, timestamp_us) -> PointCloud:
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise SchemaError("missing header", line=1) from None
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        raise SchemaError(f"missing required column(s): {', '.join(missing)}", line=1)
    cols = {name: header.index(name) for name in CSV_COLUMNS if name in header}
    has_vert = "vertical_angle" in cols

    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not f.strip() for f in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=lineno)
        try:
            x, y, z, inten = (float(row[cols[k]]) for k in ("x", "y", "z", "intensity"))
            ring_f = float(row[cols["ring"]])
            vert = float(row[cols["vertical_angle"]]) if has_vert else math.nan
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from None
        if not all(math.isfinite(v) for v in (x, y, z)):
            raise SchemaError("non-finite coordinate", line=lineno)
        if not 0.0 <= inten <= 255.0:
            raise SchemaError(f"intensity {inten} outside [0, 255]", line=lineno)
        if ring_f < 0 or ring_f != int(ring_f):
            raise SchemaError(f"ring {ring_f} is not a non-negative integer", line=lineno)
        rows.append((x, y, z, inten, ring_f, vert))

    if not rows:
        return PointCloud.empty(timestamp_us=timestamp_us, frame_id=frame_id)
    arr = np.array(rows, dtype=np.float64)
    vert = arr[:, 5] if has_vert else vertical_angles(arr[:, :3])
    return PointCloud(arr[:, :3], arr[:, 3], arr[:, 4].astype(np.int64), vert, timestamp_us, frame_id)


def _parse_kitti_bin(data, *, frame_id, timestamp_us, profile=None) -> PointCloud:
    data = bytes(data)
    if len(data) % 16:
        raise ParseError("kitti-bin payload length is not a multiple of 16 bytes")
    raw = np.frombuffer(data, dtype="<f4")
    arr = raw.reshape(-1, 4).astype(np.float64)
    vert = vertical_angles(arr[:, :3])
    if profile is not None:
        angles = np.asarray(profile.channel_angles)
        ring = np.abs(vert[:, None] - angles[None, :]).argmin(axis=1)
    else:
        ring = np.zeros(len(arr), dtype=np.int64)
    inten = np.clip(arr[:, 3], 0.0, 1.0) * 255.0
    return PointCloud(arr[:, :3], inten, ring, vert, timestamp_us, frame_id)


def format_frame(cloud: PointCloud) -> str:
    """Serialise to the CSV contract with micrometre coordinates."""
    out = io.StringIO()
    out.write(",".join(CSV_COLUMNS) + "\n")
    for (x, y, z), inten, ring, vert in zip(cloud.xyz, cloud.intensity, cloud.ring, cloud.vertical_angle):
        out.write(f"{x:.6f},{y:.6f},{z:.6f},{inten:.3f},{int(ring)},{vert:.6f}\n")
    return out.getvalue()
