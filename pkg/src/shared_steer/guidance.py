"""PD haptic guidance torque on near/far preview errors."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np
from numba import njit

from .road import PerceptionErrors

FIELDS = ("a1p", "a2p", "a3p", "a4p", "K_1", "t_np", "t_fp", "T_max", "tau_d")


@dataclass(frozen=True)
class GuidanceParams:
    a1p: float = 2.0
    a2p: float = 0.05
    a3p: float = 40.0
    a4p: float = 1.0
    K_1: float = 0.25
    t_np: float = 0.3  # s
    t_fp: float = 0.7  # s
    T_max: float = 5.0  # N m
    tau_d: float = 0.05  # s, derivative filter
    enabled: bool = True

    def __post_init__(self):
        for name in FIELDS:
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"GuidanceParams.{name} is not finite")
        for name in ("t_np", "t_fp", "T_max", "tau_d"):
            if getattr(self, name) <= 0:
                raise ValueError(f"GuidanceParams.{name} must be positive, got {getattr(self, name)}")
        if self.t_fp < self.t_np:
            raise ValueError("GuidanceParams.t_fp must be >= t_np")

    def as_dict(self) -> dict:
        return asdict(self)

    def packed(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FIELDS] + [float(self.enabled)])


@dataclass
class GuidanceState:
    prev_e_y: float = 0.0
    prev_e_theta: float = 0.0
    filt_dey: float = 0.0
    filt_detheta: float = 0.0


def set_enabled(gp: GuidanceParams, flag: bool) -> GuidanceParams:
    return replace(gp, enabled=bool(flag))


def guidance_torque(err: PerceptionErrors, gs: GuidanceState, gp: GuidanceParams, dt: float) -> float:
    """Advance the derivative filters by one sample of ``dt`` and return the clamped torque.

    The derivatives are backward differences passed through a first-order lag
    with time constant ``gp.tau_d``; ``gs`` is updated in place. A disabled
    controller still tracks the errors so that re-enabling does not kick.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    alpha = dt / (gp.tau_d + dt)
    gs.filt_dey += alpha * ((err.e_y - gs.prev_e_y) / dt - gs.filt_dey)
    gs.filt_detheta += alpha * ((err.e_theta - gs.prev_e_theta) / dt - gs.filt_detheta)
    gs.prev_e_y = err.e_y
    gs.prev_e_theta = err.e_theta
    if not gp.enabled:
        return 0.0
    return _torque(err.e_y, gs.filt_dey, err.e_theta, gs.filt_detheta, gp.packed())


def raw_torque(e_y: float, de_y: float, e_theta: float, de_theta: float, gp: GuidanceParams) -> float:
    """Unsaturated PD law."""
    return gp.K_1 * (gp.a1p * e_y + gp.a2p * de_y + gp.a3p * e_theta + gp.a4p * de_theta)


@njit(cache=True)
def _torque(e_y, de_y, e_theta, de_theta, p):
    if p[9] == 0.0:
        return 0.0
    t = p[4] * (p[0] * e_y + p[1] * de_y + p[2] * e_theta + p[3] * de_theta)
    return min(max(t, -p[7]), p[7])


@njit(cache=True)
def _filter_rate(e, w, tau_d):
    """Continuous counterpart of the filtered difference: (derivative estimate, dw/dt)."""
    rate = (e - w) / tau_d
    return rate, rate
