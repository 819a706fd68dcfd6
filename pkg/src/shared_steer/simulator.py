"""Fixed-step RK4 closed loop: vehicle, steering column, driver and guidance on a road path."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

import numpy as np
from numba import njit

from . import presets
from .driver import DriverParams, _driver_rates
from .guidance import GuidanceParams, _filter_rate, _torque
from .plant import (
    SteeringParams,
    VehicleParams,
    _aligning_torque,
    _bicycle_rates,
    _steering_acceleration,
    _world_rates,
    aligning_stiffness,
)
from .road import LANE_HALF_WIDTH, MAX_PROJECTION_DISTANCE, RoadPath, _project, _two_point_errors, default_course

LOG_COLUMNS = (
    "t", "X", "Y", "psi", "beta", "r", "phi", "phi_dot", "delta",
    "e_y", "e_theta", "e_y_guid", "e_theta_guid",
    "T_d", "T_h", "T_a", "lateral_error", "flags",
)
# kept in memory only
EXTRA_COLUMNS = ("phi_target", "s")
STATE_NAMES = ("beta", "r", "X", "Y", "psi", "phi", "phi_dot", "z_int", "z_pade", "T_d", "w_y", "w_theta")

FLAG_LANE_DEPARTURE = 1
FLAG_BETA_RANGE = 2
FLAG_GUIDANCE_OFF = 4

BETA_LINEAR_LIMIT = 0.2
DIVERGENCE_LIMIT = 1e6


class DivergenceError(RuntimeError):
    def __init__(self, message: str, sample: int, t: float):
        super().__init__(message)
        self.sample = sample
        self.t = t


@dataclass(frozen=True)
class Failure:
    t_fail: float = 70.0  # s
    t_response: float = 1.0  # s


@dataclass(frozen=True)
class Scenario:
    course: RoadPath = field(default_factory=default_course)
    vp: VehicleParams = presets.VEHICLE
    sp: SteeringParams = presets.STEERING
    dp_guided: DriverParams = presets.SIMULATION_DRIVER
    dp_manual: DriverParams = presets.SIMULATION_DRIVER.replace(K_d=4.0, K_hg=1.0)
    gp: GuidanceParams = presets.GUIDANCE
    duration: float = 120.0
    dt: float = 1.0 / 480.0
    log_rate: float = 120.0
    failure: Optional[Failure] = None
    reliance: Optional[str] = None

    def validate(self) -> None:
        if not (self.duration > 0 and math.isfinite(self.duration)):
            raise ValueError(f"duration must be positive, got {self.duration}")
        if not (self.dt > 0 and self.log_rate > 0):
            raise ValueError("dt and log_rate must be positive")
        if self.dt > 1.0 / self.log_rate * (1 + 1e-12):
            raise ValueError(f"dt={self.dt} exceeds the log interval 1/{self.log_rate}")
        ratio = 1.0 / (self.log_rate * self.dt)
        if abs(ratio - round(ratio)) > 1e-6:
            raise ValueError("the log interval must be an integer multiple of dt")
        if self.failure is not None:
            f = self.failure
            if f.t_fail < 0 or f.t_response < 0:
                raise ValueError("failure times must be non-negative")
            if not f.t_fail + f.t_response < self.duration:
                raise ValueError("t_fail + t_response must be before the end of the run")

    @property
    def substeps(self) -> int:
        return int(round(1.0 / (self.log_rate * self.dt)))

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.log_rate))

    def initial_driver(self) -> DriverParams:
        return self.dp_guided if self.gp.enabled else self.dp_manual

    def header(self) -> dict:
        """Flat parameter record describing this run."""
        dp = self.initial_driver()
        out = {"reliance": self.reliance or "custom", "duration": self.duration, "dt": self.dt, "log_rate": self.log_rate}
        out.update({f"vehicle.{k}": v for k, v in self.vp.__dict__.items()})
        out.update({f"steering.{k}": v for k, v in self.sp.__dict__.items()})
        out.update({f"driver.{k}": v for k, v in dp.as_dict().items()})
        out.update({f"manual.{k}": v for k, v in self.dp_manual.as_dict().items()})
        out.update({f"guidance.{k}": v for k, v in self.gp.as_dict().items()})
        if self.failure is not None:
            out["failure.t_fail"] = self.failure.t_fail
            out["failure.t_response"] = self.failure.t_response
        return out


def make_scenario(
    driver: int = 1,
    reliance: str = "mid",
    *,
    failure: Optional[Failure] = None,
    duration: float = 120.0,
    course: Optional[RoadPath] = None,
    base: DriverParams = presets.SIMULATION_DRIVER,
    **kwargs,
) -> Scenario:
    """Scenario for one of the three attention levels at a given reliance level."""
    if driver not in presets.DRIVER_DELAYS:
        raise ValueError(f"driver must be one of {sorted(presets.DRIVER_DELAYS)}, got {driver}")
    K_d, K_hg, enabled = presets.reliance_preset(reliance)
    t_p = presets.DRIVER_DELAYS[driver]
    K_d_manual, K_hg_manual, _ = presets.RELIANCE["manual"]
    gp = kwargs.pop("gp", presets.GUIDANCE)
    return Scenario(
        course=course if course is not None else default_course(),
        dp_guided=base.replace(t_p=t_p, K_d=K_d, K_hg=K_hg),
        dp_manual=base.replace(t_p=t_p, K_d=K_d_manual, K_hg=K_hg_manual),
        gp=replace(gp, enabled=enabled),
        duration=duration,
        failure=failure,
        reliance=reliance,
        **kwargs,
    )


class SimLog:
    """Uniformly sampled closed-loop record."""

    def __init__(self, values: np.ndarray, header: Optional[dict] = None):
        self.values = values
        self.header = dict(header or {})
        self._index = {name: i for i, name in enumerate(LOG_COLUMNS + EXTRA_COLUMNS)}

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[:, self._index[name]]

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def columns(self) -> tuple[str, ...]:
        return LOG_COLUMNS

    def table(self) -> np.ndarray:
        """Exported columns only, in LOG_COLUMNS order."""
        return self.values[:, : len(LOG_COLUMNS)]

    def head(self, n: int) -> "SimLog":
        return SimLog(self.values[:n], self.header)


def run(scenario: Scenario) -> SimLog:
    scenario.validate()
    vp, sp = scenario.vp, scenario.sp
    M, N = vp.matrices
    veh = np.array([aligning_stiffness(vp, sp), vp.l_f, vp.v, sp.J_s, sp.B_s, sp.K_t])
    dt = scenario.dt
    fail_step = switch_step = -1
    if scenario.failure is not None:
        fail_step = int(round(scenario.failure.t_fail / dt))
        switch_step = int(round((scenario.failure.t_fail + scenario.failure.t_response) / dt))
    y0 = np.zeros(len(STATE_NAMES))
    y0[2], y0[3], y0[4] = scenario.course.origin
    values, status, bad = _integrate(
        scenario.course.table,
        y0,
        np.ascontiguousarray(M),
        np.ascontiguousarray(N),
        veh,
        scenario.initial_driver().packed(),
        scenario.dp_manual.packed(),
        scenario.gp.packed(),
        scenario.n_samples,
        scenario.substeps,
        dt,
        fail_step,
        switch_step,
    )
    if status == 1:
        raise DivergenceError(f"state exceeded {DIVERGENCE_LIMIT:g} at sample {bad}", bad, bad / scenario.log_rate)
    if status == 2:
        raise DivergenceError(
            f"preview point more than {MAX_PROJECTION_DISTANCE:g} m from the path at sample {bad}",
            bad,
            bad / scenario.log_rate,
        )
    flags = values[:, LOG_COLUMNS.index("flags")].astype(int)
    if np.any(flags & FLAG_BETA_RANGE):
        first = int(np.argmax(flags & FLAG_BETA_RANGE))
        warnings.warn(
            f"|beta| exceeds {BETA_LINEAR_LIMIT} rad from t={values[first, 0]:.3f} s; linear model out of range",
            RuntimeWarning,
            stacklevel=2,
        )
    return SimLog(values, scenario.header())


def inject_failure(scenario: Scenario, t_fail: float = 70.0, t_response: float = 1.0) -> Scenario:
    """Copy of ``scenario`` whose guidance stops at ``t_fail`` and whose driver
    switches to the manual parameters ``t_response`` later."""
    out = replace(scenario, failure=Failure(t_fail, t_response))
    out.validate()
    return out


def run_many(scenarios: Iterable[Scenario], workers: Optional[int] = None) -> list[SimLog]:
    """Independent runs, returned in input order."""
    scenarios = list(scenarios)
    if workers == 1 or len(scenarios) < 2:
        return [run(s) for s in scenarios]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, scenarios))


@dataclass(frozen=True)
class Metrics:
    mean_abs_lateral: float
    max_abs_lateral: float
    mean_abs_Td: float
    lane_departure: bool
    traj_mae_vs_ref: Optional[float] = None

    def as_text(self) -> str:
        lines = [f"{k}={str(v).lower() if isinstance(v, bool) else v}" for k, v in self.__dict__.items() if v is not None]
        return "\n".join(lines) + "\n"


def compute_metrics(log: SimLog, reference: Optional[SimLog] = None, mask: Optional[np.ndarray] = None) -> Metrics:
    lat = np.abs(log["lateral_error"])
    Td = np.abs(log["T_d"])
    if mask is not None:
        if not np.any(mask):
            raise ValueError("metric mask selects no samples")
        lat, Td = lat[mask], Td[mask]
    traj = None
    if reference is not None:
        if len(reference) != len(log):
            raise ValueError(f"log has {len(log)} samples but reference has {len(reference)}")
        if not np.allclose(reference["t"], log["t"], rtol=0, atol=1e-9):
            raise ValueError("log and reference are not time-aligned")
        dist = np.hypot(log["X"] - reference["X"], log["Y"] - reference["Y"])
        traj = float(np.mean(dist[mask] if mask is not None else dist))
    return Metrics(
        mean_abs_lateral=float(lat.mean()),
        max_abs_lateral=float(lat.max()),
        mean_abs_Td=float(Td.mean()),
        lane_departure=bool(np.any(lat > LANE_HALF_WIDTH)),
        traj_mae_vs_ref=traj,
    )


def segment_mask(log: SimLog, course: RoadPath, index: int) -> np.ndarray:
    """Samples whose CG station lies on segment ``index`` of ``course``."""
    lo, hi = course.segment_bounds(index)
    s = log["s"]
    return (s >= lo) & (s <= hi)


def first_curve_mask(log: SimLog, course: RoadPath) -> np.ndarray:
    return segment_mask(log, course, course.arc_indices()[0])


def post_failure_mask(log: SimLog, course: RoadPath, t_fail: float) -> np.ndarray:
    """Samples from ``t_fail`` on while the CG stays on the segment it occupied at ``t_fail``."""
    t = log["t"]
    k = int(np.searchsorted(t, t_fail - 1e-9))
    s = log["s"][min(k, len(t) - 1)]
    index = int(np.searchsorted(course.table[:, 1], s, side="right")) - 1
    return (t >= t_fail - 1e-9) & segment_mask(log, course, max(index, 0))


# Compiled closed loop.

_NX = 12
_NAUX = 10  # delta, e_y, e_theta, e_y_g, e_theta_g, T_h, T_a, phi_target, max preview distance, guidance on


@njit(cache=True)
def _rhs(y, table, M, N, veh, dp, gp, guidance_on, out, aux):
    beta = y[0]
    r = y[1]
    X = y[2]
    Y = y[3]
    psi = y[4]
    phi = y[5]
    phi_dot = y[6]
    v = veh[2]
    course = psi + beta
    delta = veh[5] * phi
    e_y, e_th, dist_d = _two_point_errors(table, X, Y, course, v, dp[8], dp[9])
    g_y, g_th, dist_g = _two_point_errors(table, X, Y, course, v, gp[5], gp[6])
    de_y, dw_y = _filter_rate(g_y, y[10], gp[8])
    de_th, dw_th = _filter_rate(g_th, y[11], gp[8])
    T_h = _torque(g_y, de_y, g_th, de_th, gp) if guidance_on else 0.0
    T_a = _aligning_torque(beta, r, delta, veh[0], veh[1], v)
    dbeta, dr = _bicycle_rates(beta, r, delta, M, N)
    dX, dY, dpsi = _world_rates(beta, r, psi, v)
    dz_int, dz_pade, dT_d, phi_target = _driver_rates(e_y, e_th, phi, T_h, y[7], y[8], y[9], dp)
    out[0] = dbeta
    out[1] = dr
    out[2] = dX
    out[3] = dY
    out[4] = dpsi
    out[5] = phi_dot
    out[6] = _steering_acceleration(phi_dot, y[9], T_h, T_a, veh[3], veh[4])
    out[7] = dz_int
    out[8] = dz_pade
    out[9] = dT_d
    out[10] = dw_y
    out[11] = dw_th
    aux[0] = delta
    aux[1] = e_y
    aux[2] = e_th
    aux[3] = g_y
    aux[4] = g_th
    aux[5] = T_h
    aux[6] = T_a
    aux[7] = phi_target
    aux[8] = max(dist_d, dist_g)
    aux[9] = 1.0 if (guidance_on and gp[9] != 0.0) else 0.0


@njit(cache=True)
def _integrate(table, y0, M, N, veh, dp_start, dp_manual, gp, n_samples, substeps, dt, fail_step, switch_step):
    ncols = 18 + 2
    log = np.zeros((n_samples, ncols))
    y = y0.copy()
    k1 = np.empty(_NX)
    k2 = np.empty(_NX)
    k3 = np.empty(_NX)
    k4 = np.empty(_NX)
    tmp = np.empty(_NX)
    aux = np.empty(_NAUX)
    scratch = np.empty(_NAUX)
    for i in range(n_samples):
        step = i * substeps
        guidance_on = fail_step < 0 or step < fail_step
        dp = dp_manual if (switch_step >= 0 and step >= switch_step) else dp_start
        _rhs(y, table, M, N, veh, dp, gp, guidance_on, k1, aux)
        if aux[8] > 100.0:
            return log, 2, i
        s_cg, d_cg, _, _ = _project(table, y[2], y[3])
        row = log[i]
        row[0] = step * dt
        row[1] = y[2]
        row[2] = y[3]
        row[3] = y[4]
        row[4] = y[0]
        row[5] = y[1]
        row[6] = y[5]
        row[7] = y[6]
        row[8] = aux[0]
        row[9] = aux[1]
        row[10] = aux[2]
        row[11] = aux[3]
        row[12] = aux[4]
        row[13] = y[9]
        row[14] = aux[5]
        row[15] = aux[6]
        row[16] = d_cg
        flags = 0
        if abs(d_cg) > 1.8:
            flags |= 1
        if abs(y[0]) > 0.2:
            flags |= 2
        if aux[9] == 0.0:
            flags |= 4
        row[17] = flags
        row[18] = aux[7]
        row[19] = s_cg
        if i == n_samples - 1:
            break
        for sub in range(substeps):
            step = i * substeps + sub
            guidance_on = fail_step < 0 or step < fail_step
            dp = dp_manual if (switch_step >= 0 and step >= switch_step) else dp_start
            _rhs(y, table, M, N, veh, dp, gp, guidance_on, k1, scratch)
            for j in range(_NX):
                tmp[j] = y[j] + 0.5 * dt * k1[j]
            _rhs(tmp, table, M, N, veh, dp, gp, guidance_on, k2, scratch)
            for j in range(_NX):
                tmp[j] = y[j] + 0.5 * dt * k2[j]
            _rhs(tmp, table, M, N, veh, dp, gp, guidance_on, k3, scratch)
            for j in range(_NX):
                tmp[j] = y[j] + dt * k3[j]
            _rhs(tmp, table, M, N, veh, dp, gp, guidance_on, k4, scratch)
            for j in range(_NX):
                y[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
        for j in range(_NX):
            if not (abs(y[j]) <= 1e6):
                return log, 1, i + 1
    return log, 0, -1
