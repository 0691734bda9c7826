from .correlation import SignalSeries, correlate_params, format_correlation, format_signal, parse_signal, pearson
from .fit import FitConfig, FitResult, ParamSeries, WindowEstimate, fit_idm, objective, sliding_estimation, window_starts
from .idm import (
    PARAM_NAMES,
    FollowSample,
    IdmBounds,
    IdmParams,
    LeaderProfile,
    desired_gap,
    equilibrium_gap,
    idm_accel,
    integrate_follower,
    simulate_follower,
)

__all__ = [
    "FitConfig",
    "FitResult",
    "FollowSample",
    "IdmBounds",
    "IdmParams",
    "LeaderProfile",
    "PARAM_NAMES",
    "ParamSeries",
    "SignalSeries",
    "WindowEstimate",
    "correlate_params",
    "desired_gap",
    "equilibrium_gap",
    "fit_idm",
    "format_correlation",
    "format_signal",
    "idm_accel",
    "integrate_follower",
    "objective",
    "parse_signal",
    "pearson",
    "simulate_follower",
    "sliding_estimation",
    "window_starts",
]
