"""Constant-velocity Kalman filter on planar position.

State is (x, y, vx, vy). Process noise is the exact discretisation of
continuous white-noise acceleration, so predicting twice over dt/2 gives the
same covariance as predicting once over dt.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DomainError

H = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])


@dataclass(frozen=True, eq=False)
class KalmanState:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=np.float64).reshape(4)
        cov = np.array(self.cov, dtype=np.float64).reshape(4, 4)
        mean.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @classmethod
    def initial(cls, x: float, y: float, pos_var: float, vel_var: float) -> "KalmanState":
        return cls(np.array([x, y, 0.0, 0.0]), np.diag([pos_var, pos_var, vel_var, vel_var]))

    @property
    def position(self) -> tuple[float, float]:
        return float(self.mean[0]), float(self.mean[1])

    @property
    def velocity(self) -> tuple[float, float]:
        return float(self.mean[2]), float(self.mean[3])


def transition(dt: float) -> np.ndarray:
    f = np.eye(4)
    f[0, 2] = f[1, 3] = dt
    return f


def process_noise(dt: float, accel_sigma: float) -> np.ndarray:
    q = accel_sigma**2
    a, b, c = dt**3 / 3.0, dt**2 / 2.0, dt
    return q * np.array(
        [
            [a, 0.0, b, 0.0],
            [0.0, a, 0.0, b],
            [b, 0.0, c, 0.0],
            [0.0, b, 0.0, c],
        ]
    )


def kf_predict(state: KalmanState, dt: float, accel_sigma: float) -> KalmanState:
    if not dt > 0:
        raise DomainError(f"prediction step must be positive, got {dt}")
    f = transition(dt)
    cov = f @ state.cov @ f.T + process_noise(dt, accel_sigma)
    return KalmanState(f @ state.mean, 0.5 * (cov + cov.T))


def kf_correct(state: KalmanState, z, meas_sigma: float) -> KalmanState:
    """Position update in Joseph form, which keeps the covariance PSD."""
    z = np.asarray(z, dtype=np.float64).reshape(2)
    r = np.eye(2) * meas_sigma**2
    p = state.cov
    s = H @ p @ H.T + r
    k = np.linalg.solve(s, H @ p).T
    mean = state.mean + k @ (z - H @ state.mean)
    ikh = np.eye(4) - k @ H
    cov = ikh @ p @ ikh.T + k @ r @ k.T
    return KalmanState(mean, 0.5 * (cov + cov.T))
