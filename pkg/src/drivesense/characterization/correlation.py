from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from ..errors import CorrelationUndefined, DomainError, ParseError, RangeError, SchemaError
from .fit import ParamSeries
from .idm import PARAM_NAMES


@dataclass(frozen=True, eq=False)
class SignalSeries:
    times_us: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times_us, dtype=np.int64).reshape(-1)
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if t.shape != v.shape:
            raise SchemaError("times and values differ in length")
        if np.any(np.diff(t) <= 0):
            raise SchemaError("signal timestamps must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise SchemaError("signal values must be finite")
        object.__setattr__(self, "times_us", t)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return len(self.times_us)

    def resample(self, grid_us: np.ndarray) -> np.ndarray:
        return np.interp(grid_us.astype(float), self.times_us.astype(float), self.values)


def parse_signal(data: bytes | str) -> SignalSeries:
    """Read a ``timestamp_us,value`` CSV."""
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    reader = csv.reader(io.StringIO(text))
    header = [h.strip() for h in next(reader, [])]
    if header[:2] != ["timestamp_us", "value"]:
        raise SchemaError("expected header 'timestamp_us,value'", line=1)
    times, values = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            times.append(int(row[0]))
            values.append(float(row[1]))
        except (ValueError, IndexError) as exc:
            raise ParseError(str(exc), line=lineno) from None
    return SignalSeries(np.array(times, dtype=np.int64), np.array(values))


def format_signal(series: SignalSeries) -> str:
    lines = ["timestamp_us,value"]
    lines += [f"{t},{v:.9g}" for t, v in zip(series.times_us, series.values)]
    return "\n".join(lines) + "\n"


def uniform_grid(t0_us: int, t1_us: int, grid_hz: float) -> np.ndarray:
    step = 1e6 / grid_hz
    n = int(math.floor((t1_us - t0_us) / step + 1e-9)) + 1
    return t0_us + np.arange(n) * step


def pearson(x: SignalSeries, y: SignalSeries, t0_us: int, t1_us: int, grid_hz: float = 2.0) -> float:
    """Pearson correlation of two series after linear resampling onto a common grid."""
    if not grid_hz > 0:
        raise DomainError("grid_hz must be positive")
    for name, s in (("x", x), ("y", y)):
        if len(s) == 0 or s.times_us[0] > t0_us or s.times_us[-1] < t1_us:
            raise RangeError(f"series {name} does not cover [{t0_us}, {t1_us}]")
    grid = uniform_grid(t0_us, t1_us, grid_hz)
    if len(grid) < 3:
        raise DomainError(f"need at least 3 grid samples, got {len(grid)}")
    xs = x.resample(grid)
    ys = y.resample(grid)
    xc = xs - xs.mean()
    yc = ys - ys.mean()
    sxx, syy = float(xc @ xc), float(yc @ yc)
    # relative floor: a constant series resamples to values equal up to rounding
    if sxx <= 1e-24 * max(1.0, float(xs @ xs)) or syy <= 1e-24 * max(1.0, float(ys @ ys)):
        raise CorrelationUndefined("one of the series has zero variance on the grid")
    r = float(xc @ yc) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def correlate_params(
    series: ParamSeries, signal: SignalSeries, grid_hz: float = 2.0, t0_us: int | None = None, t1_us: int | None = None
) -> dict[str, float | None]:
    """Correlation of each IDM parameter series with ``signal`` over their common span.

    Parameters whose correlation is undefined map to ``None``.
    """
    times = series.times_us
    if len(times) < 2 or len(signal) < 2:
        return {name: None for name in PARAM_NAMES}
    lo = max(int(times[0]), int(signal.times_us[0])) if t0_us is None else t0_us
    hi = min(int(times[-1]), int(signal.times_us[-1])) if t1_us is None else t1_us
    out: dict[str, float | None] = {}
    for name in PARAM_NAMES:
        try:
            out[name] = pearson(SignalSeries(times, series.values(name)), signal, lo, hi, grid_hz)
        except (CorrelationUndefined, RangeError, DomainError):
            out[name] = None
    return out


def format_correlation(corr: dict[str, float | None]) -> str:
    return "".join(f"{k}={'nan' if v is None else f'{v:.9f}'}\n" for k, v in corr.items())
