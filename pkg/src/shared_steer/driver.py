"""Two-point visual steering model with a first-order Pade delay and a
neuromuscular stage that weighs the visual command against the felt
guidance torque.

State ordering is ``(z_int, z_pade, T_d)``; input ordering is
``(e_y, e_theta, phi, T_h)``; output ordering is ``(T_d, phi_target)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np
from numba import njit

from .road import PerceptionErrors

INPUTS = ("e_y", "e_theta", "phi", "T_h")
OUTPUTS = ("T_d", "phi_target")
FIELDS = ("a1", "a2", "a3", "t_p", "K_d", "K_hg", "K_nms", "t_nms", "t_n", "t_f")


@dataclass(frozen=True)
class DriverParams:
    a1: float = 0.1  # rad/m
    a2: float = 0.01  # rad/(m s)
    a3: float = 3.7
    t_p: float = 0.1  # s
    K_d: float = 3.0  # N m/rad
    K_hg: float = 0.5
    K_nms: float = 1.0  # N m/rad
    t_nms: float = 0.1  # s
    t_n: float = 0.3  # s
    t_f: float = 1.0  # s

    def __post_init__(self):
        for name in FIELDS:
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"DriverParams.{name} is not finite")
        for name in ("t_p", "t_nms", "t_n", "t_f"):
            if getattr(self, name) <= 0:
                raise ValueError(f"DriverParams.{name} must be positive, got {getattr(self, name)}")
        if not 0.0 <= self.K_hg <= 1.0:
            raise ValueError(f"DriverParams.K_hg must lie in [0, 1], got {self.K_hg}")
        if self.t_f < self.t_n:
            raise ValueError("DriverParams.t_f must be >= t_n")

    def replace(self, **changes) -> "DriverParams":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return asdict(self)

    def packed(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FIELDS], dtype=float)


@dataclass
class DriverState:
    z_int: float = 0.0  # integral of e_y, m s
    z_pade: float = 0.0  # delay state, rad
    T_d: float = 0.0  # N m


@dataclass(frozen=True)
class DriverStateSpace:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray


def visual_command(err: PerceptionErrors, z_int: float, dp: DriverParams) -> float:
    """Undelayed target steering-wheel angle. The integral state obeys d(z_int)/dt = e_y."""
    return dp.a1 * err.e_y + dp.a2 * z_int + dp.a3 * err.e_theta


def pade_delay(u_vis: float, z_pade: float, t_p: float) -> tuple[float, float]:
    """All-pass (1 - t_p s/2)/(1 + t_p s/2) realization. Returns (delayed output, d(z_pade)/dt)."""
    return _pade(u_vis, z_pade, t_p)


def pade_response(omega, t_p: float) -> np.ndarray:
    """Frequency response of the delay approximation at ``omega`` rad/s."""
    jw = 1j * np.asarray(omega, dtype=float)
    return (1.0 - 0.5 * t_p * jw) / (1.0 + 0.5 * t_p * jw)


def neuromuscular_rate(phi_target: float, phi: float, T_h: float, T_d: float, dp: DriverParams) -> float:
    return _nms_rate(phi_target, phi, T_h, T_d, dp.K_d, dp.K_hg, dp.K_nms, dp.t_nms)


def driver_rates(err: PerceptionErrors, phi: float, T_h: float, state: DriverState, dp: DriverParams):
    """Cascade visual command -> delay -> neuromuscular stage.

    Returns ``((dz_int, dz_pade, dT_d), phi_target)``.
    """
    dz_int, dz_pade, dT_d, phi_target = _driver_rates(
        err.e_y, err.e_theta, phi, T_h, state.z_int, state.z_pade, state.T_d, dp.packed()
    )
    return (dz_int, dz_pade, dT_d), phi_target


def assemble_state_space(dp: DriverParams) -> DriverStateSpace:
    a1, a2, a3, t_p = dp.a1, dp.a2, dp.a3, dp.t_p
    g = (dp.K_d + dp.K_nms) / dp.t_nms
    w = 2.0 / t_p
    A = np.array(
        [
            [0.0, 0.0, 0.0],
            [a2 * w, -w, 0.0],
            [-a2 * g, 2.0 * g, -1.0 / dp.t_nms],
        ]
    )
    B = np.array(
        [
            [1.0, 0.0, 0.0, 0.0],
            [a1 * w, a3 * w, 0.0, 0.0],
            [-a1 * g, -a3 * g, -dp.K_nms / dp.t_nms, -dp.K_hg / dp.t_nms],
        ]
    )
    C = np.array(
        [
            [0.0, 0.0, 1.0],
            [-a2, 2.0, 0.0],
        ]
    )
    D = np.array(
        [
            [0.0, 0.0, 0.0, 0.0],
            [-a1, -a3, 0.0, 0.0],
        ]
    )
    return DriverStateSpace(A, B, C, D)


# Compiled kernels; ``p`` is DriverParams.packed().


@njit(cache=True)
def _pade(u_vis, z_pade, t_p):
    return 2.0 * z_pade - u_vis, (2.0 / t_p) * (u_vis - z_pade)


@njit(cache=True)
def _nms_rate(phi_target, phi, T_h, T_d, K_d, K_hg, K_nms, t_nms):
    return (K_d * phi_target + K_nms * (phi_target - phi) - K_hg * T_h - T_d) / t_nms


@njit(cache=True)
def _driver_rates(e_y, e_theta, phi, T_h, z_int, z_pade, T_d, p):
    u_vis = p[0] * e_y + p[1] * z_int + p[2] * e_theta
    phi_target, dz_pade = _pade(u_vis, z_pade, p[3])
    dT_d = _nms_rate(phi_target, phi, T_h, T_d, p[4], p[5], p[6], p[7])
    return e_y, dz_pade, dT_d, phi_target
