"""Intelligent Driver Model and a follower simulator built on it."""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields
from typing import NamedTuple

import numpy as np

from ..errors import ConfigError, DomainError, SimulationError

PARAM_NAMES = ("s0", "v0", "T", "a", "b")


@dataclass(frozen=True)
class IdmParams:
    """Car-following parameters.

    s0: minimum spacing (m); v0: desired free-flow speed (m/s); T: safe time
    headway (s); a: maximum acceleration (m/s^2); b: comfortable braking
    deceleration (m/s^2); delta: acceleration exponent, held fixed.
    """

    s0: float = 2.0
    v0: float = 30.0
    T: float = 1.5
    a: float = 1.0
    b: float = 2.0
    delta: float = 4.0

    def __post_init__(self):
        for name in PARAM_NAMES:
            if not getattr(self, name) > 0:
                raise DomainError(f"IDM parameter {name} must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAM_NAMES])

    @classmethod
    def from_array(cls, x, delta: float = 4.0) -> "IdmParams":
        return cls(*(float(v) for v in x), delta=delta)

    def as_dict(self) -> dict:
        return {n: getattr(self, n) for n in PARAM_NAMES}


@dataclass(frozen=True)
class IdmBounds:
    s0: tuple[float, float] = (0.5, 10.0)
    v0: tuple[float, float] = (1.0, 60.0)
    T: tuple[float, float] = (0.1, 5.0)
    a: tuple[float, float] = (0.1, 5.0)
    b: tuple[float, float] = (0.1, 5.0)

    def __post_init__(self):
        for f in fields(self):
            lo, hi = getattr(self, f.name)
            if not 0 < lo < hi:
                raise ConfigError(f"bounds for {f.name} must satisfy 0 < lo < hi")

    @property
    def lower(self) -> np.ndarray:
        return np.array([b[0] for b in astuple(self)])

    @property
    def upper(self) -> np.ndarray:
        return np.array([b[1] for b in astuple(self)])

    def contains(self, p: IdmParams) -> bool:
        x = p.as_array()
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))


def desired_gap(p: IdmParams, v, dv):
    return p.s0 + np.maximum(0.0, v * p.T + v * dv / (2.0 * math.sqrt(p.a * p.b)))


def idm_accel(p: IdmParams, v, s, dv):
    """IDM acceleration for speed ``v``, bumper gap ``s`` and closing speed ``dv``.

    Works elementwise on arrays. The interaction term uses the desired gap
    clamped so it never drops below s0.
    """
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr <= 0):
        raise DomainError("gap must be positive")
    v_arr = np.asarray(v, dtype=float)
    out = p.a * (1.0 - (v_arr / p.v0) ** p.delta - (desired_gap(p, v_arr, np.asarray(dv, dtype=float)) / s_arr) ** 2)
    return float(out) if out.ndim == 0 else out


def equilibrium_gap(p: IdmParams, v: float) -> float:
    return float(desired_gap(p, v, 0.0)) / math.sqrt(1.0 - (v / p.v0) ** p.delta)


class LeaderProfile:
    """Piecewise-linear leader speed over time with exactly integrated position.

    Speed is held at the first/last breakpoint value outside the given range.
    """

    def __init__(self, times_s, speeds):
        self.t = np.asarray(times_s, dtype=float)
        self.v = np.asarray(speeds, dtype=float)
        if self.t.ndim != 1 or self.t.shape != self.v.shape or len(self.t) == 0:
            raise ConfigError("leader profile needs matching 1-D time and speed arrays")
        if np.any(np.diff(self.t) <= 0):
            raise ConfigError("leader profile times must increase")
        if np.any(self.v < 0):
            raise ConfigError("leader speeds must be non-negative")
        seg = 0.5 * (self.v[1:] + self.v[:-1]) * np.diff(self.t)
        self._cum = np.concatenate([[0.0], np.cumsum(seg)])

    @classmethod
    def constant(cls, speed: float) -> "LeaderProfile":
        return cls([0.0], [speed])

    @classmethod
    def steps(cls, levels: list[tuple[float, float]], ramp_accel: float = 1.5, v_start: float | None = None) -> "LeaderProfile":
        """Hold each (speed, duration) level in turn, ramping between them at ``ramp_accel``."""
        t, v = [0.0], [levels[0][0] if v_start is None else v_start]
        for speed, hold in levels:
            ramp = abs(speed - v[-1]) / ramp_accel
            if ramp > 0:
                t.append(t[-1] + ramp)
                v.append(speed)
            if hold > 0:
                t.append(t[-1] + hold)
                v.append(speed)
        return cls(t, v)

    def speed(self, t):
        return np.interp(t, self.t, self.v)

    def _travelled(self, t: np.ndarray) -> np.ndarray:
        """Integral of speed from the first breakpoint to ``t``."""
        tb, vb = self.t, self.v
        if len(tb) == 1:
            return vb[0] * (t - tb[0])
        idx = np.clip(np.searchsorted(tb, t, side="right") - 1, 0, len(tb) - 2)
        tau = np.clip(t - tb[idx], 0.0, None)
        seg = tb[idx + 1] - tb[idx]
        slope = (vb[idx + 1] - vb[idx]) / seg
        inner = self._cum[idx] + vb[idx] * np.minimum(tau, seg) + 0.5 * slope * np.minimum(tau, seg) ** 2
        after = vb[-1] * np.maximum(t - tb[-1], 0.0)
        before = vb[0] * np.minimum(t - tb[0], 0.0)
        return np.where(t < tb[0], before, inner + after)

    def position(self, t):
        """Distance travelled since t = 0 (negative before it)."""
        t = np.asarray(t, dtype=float)
        out = self._travelled(t) - self._travelled(np.array(0.0))
        return float(out) if out.ndim == 0 else out


class FollowSample(NamedTuple):
    timestamp_us: int
    v: float
    s: float
    dv: float
    a_obs: float


class FollowerTrajectory(NamedTuple):
    t: np.ndarray  # seconds
    distance: np.ndarray  # follower distance travelled (m)
    v: np.ndarray
    s: np.ndarray
    dv: np.ndarray
    accel: np.ndarray
    leader_distance: np.ndarray
    leader_speed: np.ndarray


def _accel_clamped(p: IdmParams, v: float, s: float, dv: float) -> float:
    acc = idm_accel(p, v, s, dv)
    if v <= 0.0 and acc < 0.0:
        return 0.0
    return acc


def integrate_follower(
    p: IdmParams, leader: LeaderProfile, v_init: float, s_init: float, dt_s: float, steps: int
) -> FollowerTrajectory:
    """Fourth-order Runge-Kutta integration of an IDM follower behind ``leader``.

    Returns the state at the start of each of the ``steps`` intervals.
    """
    if not dt_s > 0:
        raise DomainError("dt_s must be positive")
    if not s_init > 0:
        raise DomainError("initial gap must be positive")
    if steps < 0:
        raise DomainError("steps must be non-negative")
    lead0 = float(leader.position(0.0))

    def gap(t, d):
        return s_init + float(leader.position(t)) - lead0 - d

    def deriv(k, t, d, v):
        s = gap(t, d)
        if s <= 0:
            raise SimulationError(f"collision (gap {s:.3f} m)", step=k)
        return max(v, 0.0), _accel_clamped(p, max(v, 0.0), s, max(v, 0.0) - float(leader.speed(t)))

    cols = {name: np.zeros(steps) for name in FollowerTrajectory._fields}
    d, v = 0.0, float(v_init)
    for k in range(steps):
        t = k * dt_s
        s = gap(t, d)
        if s <= 0:
            raise SimulationError(f"collision (gap {s:.3f} m)", step=k)
        vl = float(leader.speed(t))
        cols["t"][k] = t
        cols["distance"][k] = d
        cols["v"][k] = v
        cols["s"][k] = s
        cols["dv"][k] = v - vl
        cols["accel"][k] = _accel_clamped(p, v, s, v - vl)
        cols["leader_distance"][k] = float(leader.position(t)) - lead0
        cols["leader_speed"][k] = vl

        k1 = deriv(k, t, d, v)
        k2 = deriv(k, t + dt_s / 2, d + dt_s / 2 * k1[0], v + dt_s / 2 * k1[1])
        k3 = deriv(k, t + dt_s / 2, d + dt_s / 2 * k2[0], v + dt_s / 2 * k2[1])
        k4 = deriv(k, t + dt_s, d + dt_s * k3[0], v + dt_s * k3[1])
        d += dt_s / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        v = max(0.0, v + dt_s / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]))
    return FollowerTrajectory(**cols)


def simulate_follower(
    p: IdmParams,
    leader: LeaderProfile,
    init: tuple[float, float],
    dt_s: float,
    steps: int,
    t0_us: int = 0,
) -> list[FollowSample]:
    """Follower samples (v, s, dv, a_obs) at the start of each integration step.

    ``init`` is the initial (speed, gap); ``a_obs`` is the model acceleration
    at the sampled state.
    """
    v_init, s_init = init
    traj = integrate_follower(p, leader, v_init, s_init, dt_s, steps)
    return [
        FollowSample(t0_us + int(round(t * 1e6)), float(v), float(s), float(dv), float(a))
        for t, v, s, dv, a in zip(traj.t, traj.v, traj.s, traj.dv, traj.accel)
    ]
