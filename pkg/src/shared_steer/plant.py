"""Linear bicycle model, self-aligning torque and steering column.

Sign convention: positive steering angle, yaw rate and heading are all
counter-clockwise (left turn).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit


@dataclass(frozen=True)
class VehicleParams:
    m: float = 1100.0  # kg
    I: float = 2940.0  # kg m^2
    l_f: float = 1.0  # m
    l_r: float = 1.635  # m
    K_f: float = 53300.0  # N/rad
    K_r: float = 117000.0  # N/rad
    K_s: float = 48510.0  # N m/rad
    E_t: float = 0.026
    v: float = 60.0 / 3.6  # m/s

    def __post_init__(self):
        for name in ("m", "I", "l_f", "l_r", "K_f", "K_r", "K_s", "v"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"VehicleParams.{name} must be positive, got {value}")
        if not (math.isfinite(self.E_t) and self.E_t >= 0):
            raise ValueError(f"VehicleParams.E_t must be >= 0, got {self.E_t}")

    @property
    def matrices(self) -> tuple[np.ndarray, np.ndarray]:
        """(M, N) such that d/dt [beta, r] = M @ [beta, r] + N * delta."""
        return _bicycle_matrices(self)


@dataclass(frozen=True)
class SteeringParams:
    J_s: float = 0.11  # kg m^2
    B_s: float = 0.57  # N m s/rad
    K_t: float = 1.0 / 17.0

    def __post_init__(self):
        if not (math.isfinite(self.J_s) and self.J_s > 0):
            raise ValueError(f"SteeringParams.J_s must be positive, got {self.J_s}")
        if not (math.isfinite(self.B_s) and self.B_s >= 0):
            raise ValueError(f"SteeringParams.B_s must be >= 0, got {self.B_s}")
        if not (0 < self.K_t <= 1):
            raise ValueError(f"SteeringParams.K_t must be in (0, 1], got {self.K_t}")


@dataclass
class VehicleState:
    beta: float = 0.0
    r: float = 0.0
    X: float = 0.0
    Y: float = 0.0
    psi: float = 0.0


@dataclass
class SteeringState:
    phi: float = 0.0
    phi_dot: float = 0.0


_MATRIX_CACHE: dict = {}


def _bicycle_matrices(vp: VehicleParams) -> tuple[np.ndarray, np.ndarray]:
    cached = _MATRIX_CACHE.get(vp)
    if cached is not None:
        return cached
    m, I, lf, lr, Kf, Kr, v = vp.m, vp.I, vp.l_f, vp.l_r, vp.K_f, vp.K_r, vp.v
    # m v beta' + 2(Kf+Kr) beta + (m v + 2(lf Kf - lr Kr)/v) r = 2 Kf delta
    # I r' + 2(lf Kf - lr Kr) beta + 2(lf^2 Kf + lr^2 Kr)/v r = 2 lf Kf delta
    M = np.array(
        [
            [-2.0 * (Kf + Kr) / (m * v), -(m * v + 2.0 * (lf * Kf - lr * Kr) / v) / (m * v)],
            [-2.0 * (lf * Kf - lr * Kr) / I, -2.0 * (lf * lf * Kf + lr * lr * Kr) / (v * I)],
        ]
    )
    N = np.array([2.0 * Kf / (m * v), 2.0 * lf * Kf / I])
    M.setflags(write=False)
    N.setflags(write=False)
    _MATRIX_CACHE[vp] = (M, N)
    return M, N


def aligning_stiffness(vp: VehicleParams, sp: SteeringParams) -> float:
    """Steering-wheel torque per radian of front slip, including kingpin compliance."""
    return 2.0 * vp.E_t * vp.K_f * sp.K_t / (1.0 + 2.0 * vp.E_t * vp.K_f / vp.K_s)


def aligning_torque(vs: VehicleState, delta: float, vp: VehicleParams, sp: SteeringParams) -> float:
    return _aligning_torque(vs.beta, vs.r, delta, aligning_stiffness(vp, sp), vp.l_f, vp.v)


def lateral_yaw_derivatives(vs: VehicleState, delta: float, vp: VehicleParams) -> tuple[float, float]:
    M, N = vp.matrices
    return _bicycle_rates(vs.beta, vs.r, delta, M, N)


def steady_state(delta: float, vp: VehicleParams) -> tuple[float, float]:
    """Equilibrium (beta, r) of the bicycle model under constant road-wheel angle."""
    M, N = vp.matrices
    beta, r = np.linalg.solve(M, -N * delta)
    return float(beta), float(r)


def steering_acceleration(ss: SteeringState, T_d: float, T_h: float, T_a: float, sp: SteeringParams) -> float:
    return _steering_acceleration(ss.phi_dot, T_d, T_h, T_a, sp.J_s, sp.B_s)


def front_wheel_angle(phi: float, sp: SteeringParams) -> float:
    return sp.K_t * phi


def world_kinematics(vs: VehicleState, vp: VehicleParams) -> tuple[float, float, float]:
    return _world_rates(vs.beta, vs.r, vs.psi, vp.v)


# Compiled kernels shared with the closed-loop simulator.


@njit(cache=True)
def _aligning_torque(beta, r, delta, k_aln, l_f, v):
    return k_aln * (beta + l_f * r / v - delta)


@njit(cache=True)
def _bicycle_rates(beta, r, delta, M, N):
    return (
        M[0, 0] * beta + M[0, 1] * r + N[0] * delta,
        M[1, 0] * beta + M[1, 1] * r + N[1] * delta,
    )


@njit(cache=True)
def _steering_acceleration(phi_dot, T_d, T_h, T_a, J_s, B_s):
    return (T_d + T_h + T_a - B_s * phi_dot) / J_s


@njit(cache=True)
def _world_rates(beta, r, psi, v):
    course = psi + beta
    return v * math.cos(course), v * math.sin(course), r
