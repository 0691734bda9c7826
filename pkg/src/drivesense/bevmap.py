"""Top-view (birds-eye) rasters of point clouds.

A map covers x, y in [-R, R] with N x N square cells. Row 0 is the most
forward strip (largest x) and column 0 the leftmost (largest y), so the raster
reads like a picture of the road seen from above with the vehicle heading up.
Channels are (height, intensity, density), each scaled to [0, 1] and exported
as the R, G, B planes of an 8-bit PNG.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, RangeError, SchemaError
from .pointcloud import PointCloud

CHANNELS = ("height", "intensity", "density")
HALVES = ("full", "front", "rear")
DENSITY_SATURATION = 64


@dataclass(frozen=True)
class GridConfig:
    extent_m: float = 40.0
    cells_per_side: int = 608
    z_min: float = -2.0
    z_max: float = 1.25

    def __post_init__(self):
        if not self.extent_m > 0:
            raise ConfigError("extent_m must be positive")
        if int(self.cells_per_side) != self.cells_per_side or self.cells_per_side < 2:
            raise ConfigError("cells_per_side must be an integer >= 2")
        if not self.z_min < self.z_max:
            raise ConfigError("z_min must be below z_max")

    @property
    def cell_size(self) -> float:
        return 2.0 * self.extent_m / self.cells_per_side


@dataclass(frozen=True, eq=False)
class BevMap:
    config: GridConfig
    channels: np.ndarray  # (3, rows, N)
    timestamp_us: int
    frame_id: str
    half: str = "full"

    def __post_init__(self):
        ch = np.asarray(self.channels, dtype=np.float64)
        if ch.ndim != 3 or ch.shape[0] != 3 or ch.shape[2] != self.config.cells_per_side:
            raise SchemaError(f"channel planes have shape {ch.shape}, expected (3, rows, {self.config.cells_per_side})")
        if ch.size and (ch.min() < 0.0 or ch.max() > 1.0):
            raise SchemaError("map values must lie in [0, 1]")
        if self.half not in HALVES:
            raise SchemaError(f"half must be one of {HALVES}")
        ch = np.ascontiguousarray(ch)
        ch.flags.writeable = False
        object.__setattr__(self, "channels", ch)

    @property
    def rows(self) -> int:
        return self.channels.shape[1]

    @property
    def height(self) -> np.ndarray:
        return self.channels[0]

    @property
    def intensity(self) -> np.ndarray:
        return self.channels[1]

    @property
    def density(self) -> np.ndarray:
        return self.channels[2]

    @property
    def occupied(self) -> np.ndarray:
        return self.density > 0

    def x_range(self) -> tuple[float, float]:
        """Forward coverage in the map's own frame."""
        cfg = self.config
        return cfg.extent_m - self.rows * cfg.cell_size, cfg.extent_m

    def cell_centers(self, rows: np.ndarray, cols: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        cs = self.config.cell_size
        r = self.config.extent_m
        return r - (np.asarray(rows) + 0.5) * cs, r - (np.asarray(cols) + 0.5) * cs

    def same_as(self, other: "BevMap") -> bool:
        return (
            self.config == other.config
            and self.timestamp_us == other.timestamp_us
            and self.frame_id == other.frame_id
            and self.half == other.half
            and np.array_equal(self.channels, other.channels)
        )


def _cell_index(config: GridConfig, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = config.cells_per_side
    cs = config.cell_size
    row = np.floor((config.extent_m - x) / cs).astype(np.int64)
    col = np.floor((config.extent_m - y) / cs).astype(np.int64)
    return np.clip(row, 0, n - 1), np.clip(col, 0, n - 1)


def meters_to_cell(config: GridConfig, x: float, y: float) -> tuple[int, int]:
    r = config.extent_m
    if not (-r <= x <= r and -r <= y <= r):
        raise RangeError(f"({x}, {y}) lies outside the +-{r} m map extent")
    row, col = _cell_index(config, np.array([x]), np.array([y]))
    return int(row[0]), int(col[0])


def cell_to_meters(config: GridConfig, row: int, col: int) -> tuple[float, float]:
    n = config.cells_per_side
    if not (0 <= row < n and 0 <= col < n):
        raise RangeError(f"cell ({row}, {col}) outside a {n}x{n} grid")
    cs = config.cell_size
    return config.extent_m - (row + 0.5) * cs, config.extent_m - (col + 0.5) * cs


def make_frgb(cloud: PointCloud, config: GridConfig = GridConfig()) -> BevMap:
    n = config.cells_per_side
    r = config.extent_m
    xyz = cloud.xyz
    keep = (
        (np.abs(xyz[:, 0]) <= r)
        & (np.abs(xyz[:, 1]) <= r)
        & (xyz[:, 2] >= config.z_min)
        & (xyz[:, 2] <= config.z_max)
    )
    pts = xyz[keep]
    inten = cloud.intensity[keep]
    row, col = _cell_index(config, pts[:, 0], pts[:, 1])
    flat = row * n + col

    height = np.zeros(n * n)
    intensity = np.zeros(n * n)
    np.maximum.at(height, flat, (pts[:, 2] - config.z_min) / (config.z_max - config.z_min))
    np.maximum.at(intensity, flat, inten / 255.0)
    counts = np.bincount(flat, minlength=n * n)
    density = np.minimum(1.0, np.log1p(counts) / math.log(DENSITY_SATURATION))

    channels = np.stack([np.clip(height, 0.0, 1.0), np.clip(intensity, 0.0, 1.0), density]).reshape(3, n, n)
    return BevMap(config, channels, cloud.timestamp_us, cloud.frame_id)


def rotate_map_180(m: BevMap) -> BevMap:
    return BevMap(m.config, m.channels[:, ::-1, ::-1], m.timestamp_us, m.frame_id, m.half)


def split_halves(m: BevMap, margin_m: float = 0.0) -> tuple[BevMap, BevMap]:
    """Front half as-is and rear half turned 180 degrees so it faces forward.

    Both halves keep the full map's cell geometry, so a cell's centre in the
    half's own frame is given by the same row/column formula. ``margin_m``
    extends each half past the seam.
    """
    n = m.config.cells_per_side
    if n % 2:
        raise ConfigError("split_halves needs an even number of cells per side")
    if m.half != "full":
        raise ConfigError("only full maps can be split")
    extra = int(round(margin_m / m.config.cell_size))
    extra = max(0, min(extra, n // 2))
    front = m.channels[:, : n // 2 + extra, :]
    rear = m.channels[:, n // 2 - extra :, :][:, ::-1, ::-1]
    return (
        BevMap(m.config, front, m.timestamp_us, m.frame_id, "front"),
        BevMap(m.config, rear, m.timestamp_us, m.frame_id, "rear"),
    )


def map_metadata(m: BevMap) -> dict:
    return {
        "extent_m": m.config.extent_m,
        "cells_per_side": m.config.cells_per_side,
        "z_min": m.config.z_min,
        "z_max": m.config.z_max,
        "timestamp_us": m.timestamp_us,
        "frame_id": m.frame_id,
        "half": m.half,
        "rows": m.rows,
    }


def to_png(m: BevMap) -> bytes:
    from PIL import Image

    rgb = np.round(np.moveaxis(m.channels, 0, -1) * 255.0).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(rgb, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def from_png(png: bytes, meta: dict) -> BevMap:
    from PIL import Image

    required = ("extent_m", "cells_per_side", "z_min", "z_max", "timestamp_us", "frame_id")
    missing = [k for k in required if k not in meta]
    if missing:
        raise SchemaError(f"map metadata missing {', '.join(missing)}")
    config = GridConfig(float(meta["extent_m"]), int(meta["cells_per_side"]), float(meta["z_min"]), float(meta["z_max"]))
    img = np.asarray(Image.open(io.BytesIO(png)).convert("RGB"), dtype=np.float64) / 255.0
    channels = np.moveaxis(img, -1, 0)
    if "rows" in meta and channels.shape[1] != int(meta["rows"]):
        raise SchemaError("PNG height disagrees with metadata rows")
    return BevMap(config, channels, int(meta["timestamp_us"]), str(meta["frame_id"]), meta.get("half", "full"))


def quantized(m: BevMap) -> BevMap:
    """The map as a receiver of its PNG export sees it."""
    return BevMap(m.config, np.round(m.channels * 255.0) / 255.0, m.timestamp_us, m.frame_id, m.half)


def write_map(m: BevMap, png_path, meta_path=None) -> None:
    from pathlib import Path

    png_path = Path(png_path)
    png_path.parent.mkdir(parents=True, exist_ok=True)
    png_path.write_bytes(to_png(m))
    meta_path = Path(meta_path) if meta_path else png_path.with_suffix(".json")
    meta_path.write_text(json.dumps(map_metadata(m), indent=1, sort_keys=True) + "\n")
