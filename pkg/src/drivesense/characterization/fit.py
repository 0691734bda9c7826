"""IDM parameter estimation from follower observations."""

from __future__ import annotations

import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from ..errors import InsufficientData
from .idm import PARAM_NAMES, FollowSample, IdmBounds, IdmParams, desired_gap

log = logging.getLogger(__name__)

FLAG_NO_IMPROVEMENT = "no_improvement"
FLAG_NON_IDENTIFIABLE = "non_identifiable"
FLAG_AT_BOUND = "at_bound"


@dataclass(frozen=True)
class FitConfig:
    min_samples: int = 20
    starts: int = 8
    seed: int = 0
    max_fev: int = 6000
    restarts: int = 3
    delta: float = 4.0
    # relative singular-value floor of the residual Jacobian
    identifiability_tol: float = 1e-7


@dataclass(frozen=True)
class FitResult:
    params: IdmParams
    sse: float
    n_samples: int
    flags: tuple[str, ...] = ()
    start_sse: tuple[float, ...] = ()

    def __iter__(self):
        return iter((self.params, self.sse))

    @property
    def ok(self) -> bool:
        return not self.flags


def _columns(window) -> tuple[np.ndarray, ...]:
    arr = np.array([(w.v, w.s, w.dv, w.a_obs) for w in window], dtype=float).reshape(-1, 4)
    return arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3]


class _Objective:
    """Sum of squared acceleration residuals over unit-box coordinates."""

    def __init__(self, window, bounds: IdmBounds, delta: float):
        self.v, self.s, self.dv, self.a_obs = _columns(window)
        self.lo, self.hi = bounds.lower, bounds.upper
        self.delta = delta

    def params(self, u) -> np.ndarray:
        return self.lo + np.clip(u, 0.0, 1.0) * (self.hi - self.lo)

    def residuals(self, u) -> np.ndarray:
        s0, v0, T, a, b = self.params(u)
        s_star = s0 + np.maximum(0.0, self.v * T + self.v * self.dv / (2.0 * np.sqrt(a * b)))
        pred = a * (1.0 - (self.v / v0) ** self.delta - (s_star / self.s) ** 2)
        return self.a_obs - pred

    def __call__(self, u) -> float:
        r = self.residuals(u)
        return float(r @ r)


def _jacobian(obj: _Objective, u: np.ndarray, h: float = 1e-6) -> np.ndarray:
    cols = []
    for i in range(len(u)):
        e = np.zeros_like(u)
        e[i] = h
        lo = np.clip(u - e, 0.0, 1.0)
        hi = np.clip(u + e, 0.0, 1.0)
        cols.append((obj.residuals(hi) - obj.residuals(lo)) / (hi[i] - lo[i]))
    return np.column_stack(cols)


def _start_points(n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    pts = [np.full(len(PARAM_NAMES), 0.5)]
    pts += list(rng.uniform(0.05, 0.95, size=(max(0, n - 1), len(PARAM_NAMES))))
    return np.array(pts[:n])


def fit_idm(window: list[FollowSample], bounds: IdmBounds = IdmBounds(), cfg: FitConfig = FitConfig()) -> FitResult:
    """Bounded least-squares fit of IDM parameters to observed accelerations.

    Each start runs bounded Nelder-Mead in coordinates scaled to the unit box and
    is restarted from its own optimum until it stops improving. Flags report
    fits that never beat their start point, parameters pinned at a bound, and a
    rank-deficient residual Jacobian (the data do not pin every parameter).
    """
    n = len(window)
    if n < cfg.min_samples:
        raise InsufficientData(f"window has {n} samples, need {cfg.min_samples}")
    obj = _Objective(window, bounds, cfg.delta)
    starts = _start_points(cfg.starts, cfg.seed)
    start_sse = [obj(u) for u in starts]

    best_u, best_f = None, np.inf
    for u0 in starts:
        u, f = u0, obj(u0)
        for _ in range(cfg.restarts + 1):
            res = minimize(
                obj,
                u,
                method="Nelder-Mead",
                bounds=[(0.0, 1.0)] * len(u),
                options={"xatol": 1e-10, "fatol": 1e-16, "maxfev": cfg.max_fev, "adaptive": True},
            )
            if res.fun < f * (1 - 1e-12) or (f > 0 and res.fun < f - 1e-15):
                u, f = np.clip(res.x, 0.0, 1.0), float(res.fun)
            else:
                break
        if f < best_f:
            best_u, best_f = u, f

    flags = []
    if not best_f < min(start_sse):
        best_u = starts[int(np.argmin(start_sse))]
        flags.append(FLAG_NO_IMPROVEMENT)
        log.warning("IDM fit did not improve on any start point")
    jac = _jacobian(obj, best_u)
    sv = np.linalg.svd(jac, compute_uv=False)
    if sv[0] == 0 or sv[-1] / sv[0] < cfg.identifiability_tol:
        flags.append(FLAG_NON_IDENTIFIABLE)
    if np.any(best_u <= 1e-9) or np.any(best_u >= 1 - 1e-9):
        flags.append(FLAG_AT_BOUND)

    params = IdmParams.from_array(obj.params(best_u), delta=cfg.delta)
    return FitResult(params, objective(params, window), n, tuple(flags), tuple(start_sse))


def objective(p: IdmParams, window: list[FollowSample]) -> float:
    """Sum of squared residuals between observed and model acceleration."""
    v, s, dv, a_obs = _columns(window)
    pred = p.a * (1.0 - (v / p.v0) ** p.delta - (desired_gap(p, v, dv) / s) ** 2)
    r = a_obs - pred
    return float(r @ r)


@dataclass(frozen=True)
class WindowEstimate:
    t_start_us: int
    t_end_us: int
    n_samples: int
    result: FitResult | None = None
    reason: str = ""

    @property
    def t_center_us(self) -> int:
        return (self.t_start_us + self.t_end_us) // 2


@dataclass
class ParamSeries:
    windows: list[WindowEstimate] = field(default_factory=list)
    skipped: list[WindowEstimate] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.windows)

    @property
    def times_us(self) -> np.ndarray:
        return np.array([w.t_center_us for w in self.windows], dtype=np.int64)

    def values(self, name: str) -> np.ndarray:
        return np.array([getattr(w.result.params, name) for w in self.windows])

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("t_center_us,s0,v0,T,a,b,sse,flags\n")
        for w in self.windows:
            p, r = w.result.params, w.result
            out.write(
                f"{w.t_center_us},{p.s0:.9g},{p.v0:.9g},{p.T:.9g},{p.a:.9g},{p.b:.9g},{r.sse:.9g},{'|'.join(r.flags)}\n"
            )
        return out.getvalue()


def window_starts(t_first_us: int, t_end_us: int, window_us: int, stride_us: int) -> list[int]:
    """Start times of sliding windows over [t_first, t_end).

    Windows of ``window_us`` are placed every ``stride_us`` while they fit; a
    span shorter than one window still yields a single window.
    """
    span = t_end_us - t_first_us
    count = 1 if span < window_us else (span - window_us) // stride_us + 1
    return [t_first_us + k * stride_us for k in range(count)]


def sliding_estimation(
    samples: list[FollowSample],
    window_s: float,
    stride_s: float,
    bounds: IdmBounds = IdmBounds(),
    cfg: FitConfig = FitConfig(),
    workers: int = 1,
) -> ParamSeries:
    """Fit every window of the series; short windows are recorded as skipped.

    The covered span ends one sample period after the last sample, so N samples
    at rate f span N/f seconds.
    """
    if not (window_s > 0 and stride_s > 0):
        raise ValueError("window_s and stride_s must be positive")
    if not samples:
        return ParamSeries()
    samples = sorted(samples, key=lambda s: s.timestamp_us)
    times = np.array([s.timestamp_us for s in samples], dtype=np.int64)
    period = int(np.median(np.diff(times))) if len(times) > 1 else 0
    window_us, stride_us = int(round(window_s * 1e6)), int(round(stride_s * 1e6))
    starts = window_starts(int(times[0]), int(times[-1]) + period, window_us, stride_us)

    def run(start: int) -> WindowEstimate:
        lo, hi = np.searchsorted(times, [start, start + window_us], side="left")
        chunk = samples[lo:hi]
        if len(chunk) < cfg.min_samples:
            return WindowEstimate(start, start + window_us, len(chunk), None, "insufficient data")
        return WindowEstimate(start, start + window_us, len(chunk), fit_idm(chunk, bounds, cfg))

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            estimates = list(pool.map(run, starts))
    else:
        estimates = [run(s) for s in starts]
    series = ParamSeries()
    for est in estimates:
        (series.windows if est.result is not None else series.skipped).append(est)
    return series
