"""Grey-box prediction-error identification of the driver model."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from numba import njit
from scipy.linalg import expm

from . import presets
from .driver import DriverParams, assemble_state_space
from .simulator import Scenario, run

log = logging.getLogger(__name__)

FREE_PARAMS = ("a1", "a2", "a3", "t_p", "K_d", "K_hg")
DATA_COLUMNS = ("t", "e_y", "e_theta", "phi", "T_h", "T_d", "phi_obs")


class ConstantReference(ValueError):
    pass


class NonFiniteLoss(ArithmeticError):
    pass


@dataclass
class Dataset:
    rate: float
    inputs: np.ndarray  # (n, 4): e_y, e_theta, phi, T_h
    outputs: np.ndarray  # (n, 2): T_d, phi_obs
    mode: str = "haptic"  # "manual" | "haptic"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=float)
        self.outputs = np.asarray(self.outputs, dtype=float)
        if self.inputs.ndim != 2 or self.inputs.shape[1] != 4:
            raise ValueError(f"inputs must have shape (n, 4), got {self.inputs.shape}")
        if self.outputs.shape != (self.inputs.shape[0], 2):
            raise ValueError(f"outputs must have shape ({self.inputs.shape[0]}, 2), got {self.outputs.shape}")
        if self.mode not in ("manual", "haptic"):
            raise ValueError(f"mode must be 'manual' or 'haptic', got {self.mode!r}")
        if not self.rate > 0:
            raise ValueError("sample rate must be positive")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def t(self) -> np.ndarray:
        return np.arange(len(self)) / self.rate

    def validate(self) -> None:
        if len(self) < 2 * self.rate:
            raise ValueError(f"dataset needs at least 2 s of samples, has {len(self) / self.rate:.2f} s")
        if not (np.all(np.isfinite(self.inputs)) and np.all(np.isfinite(self.outputs))):
            raise ValueError("dataset contains non-finite samples")
        if self.mode == "manual" and np.any(self.inputs[:, 3] != 0.0):
            raise ValueError("manual-mode dataset must have T_h == 0")


@dataclass
class IdentConfig:
    bounds: dict = field(default_factory=lambda: dict(presets.IDENT_BOUNDS))
    start: DriverParams = presets.IDENT_DEFAULT
    multistart: int = 1
    tol: float = 1e-4  # relative expected improvement
    max_iter: int = 100
    weights: Optional[Sequence[float]] = None  # per output; None -> inverse sample variance
    seed: int = 0
    lambda0: float = 1e-3

    def __post_init__(self):
        for name, (lo, hi) in self.bounds.items():
            if name not in FREE_PARAMS:
                raise ValueError(f"cannot identify {name!r}; free parameters are {FREE_PARAMS}")
            if not lo <= hi:
                raise ValueError(f"bounds for {name} are not ordered: {lo} > {hi}")
            value = getattr(self.start, name)
            if not lo <= value <= hi:
                raise ValueError(f"start value {name}={value} outside [{lo}, {hi}]")
        if self.multistart < 1:
            raise ValueError("multistart must be >= 1")


@dataclass
class IdentResult:
    params: DriverParams
    free: tuple[str, ...]
    fitness: tuple[float, float]  # T_d, phi_obs
    loss: float
    iterations: int
    converged: bool
    residuals: np.ndarray
    start: DriverParams
    at_bounds: tuple[str, ...] = ()
    start_index: int = 0

    def estimates(self) -> dict:
        return {name: getattr(self.params, name) for name in self.free}

    def as_text(self) -> str:
        lines = [f"{name}={value:.6g}" for name, value in self.estimates().items()]
        lines += [
            f"fitness_T_d={self.fitness[0]:.3f}",
            f"fitness_phi={self.fitness[1]:.3f}",
            f"loss={self.loss:.6g}",
            f"iterations={self.iterations}",
            f"converged={str(self.converged).lower()}",
            f"at_bounds={','.join(self.at_bounds)}",
            f"start_index={self.start_index}",
        ]
        return "\n".join(lines) + "\n"


def discretize_zoh(A: np.ndarray, B: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact zero-order-hold discretization via the augmented matrix exponential."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    n, m = B.shape
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = A
    aug[:n, n:] = B
    E = expm(aug * dt)
    return E[:n, :n], E[:n, n:]


def predict(theta: DriverParams, data: Dataset, x0: Optional[np.ndarray] = None) -> np.ndarray:
    """Simulated outputs (T_d, phi_target) of the discretized driver model, shape (n, 2)."""
    ss = assemble_state_space(theta)
    Ad, Bd = discretize_zoh(ss.A, ss.B, 1.0 / data.rate)
    x = np.zeros(3) if x0 is None else np.asarray(x0, dtype=float)
    return _simulate(Ad, Bd, ss.C, ss.D, data.inputs, x)


@njit(cache=True)
def _simulate(Ad, Bd, C, D, u, x0):
    n = u.shape[0]
    y = np.empty((n, 2))
    x = x0.copy()
    xn = np.empty(3)
    for k in range(n):
        uk = u[k]
        for i in range(2):
            acc = 0.0
            for j in range(3):
                acc += C[i, j] * x[j]
            for j in range(4):
                acc += D[i, j] * uk[j]
            y[k, i] = acc
        for i in range(3):
            acc = 0.0
            for j in range(3):
                acc += Ad[i, j] * x[j]
            for j in range(4):
                acc += Bd[i, j] * uk[j]
            xn[i] = acc
        x[:] = xn
    return y


def fit_percent(y, y_hat) -> float:
    """Normalized-RMSE fit, 100 * (1 - |y - y_hat| / |y - mean(y)|)."""
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape:
        raise ValueError(f"shape mismatch {y.shape} vs {y_hat.shape}")
    spread = np.linalg.norm(y - y.mean())
    if spread == 0.0:
        raise ConstantReference("reference output is constant")
    return float(100.0 * (1.0 - np.linalg.norm(y - y_hat) / spread))


def _free_names(data: Dataset, cfg: IdentConfig) -> tuple[str, ...]:
    names = [n for n in FREE_PARAMS if n in cfg.bounds]
    if data.mode == "manual" and "K_hg" in names:
        names.remove("K_hg")
    return tuple(names)


def _output_weights(data: Dataset, cfg: IdentConfig) -> np.ndarray:
    if cfg.weights is not None:
        w = np.asarray(cfg.weights, dtype=float)
        if w.shape != (2,) or np.any(w < 0) or not np.any(w > 0):
            raise ValueError("weights must be two non-negative numbers, not both zero")
        return w
    var = data.outputs.var(axis=0)
    return np.where(var > 0, 1.0 / np.where(var > 0, var, 1.0), 0.0)


class _Problem:
    """Weighted residual vector r(theta) over both outputs."""

    def __init__(self, data: Dataset, names, lo, hi, base: DriverParams, weights):
        self.data = data
        self.names = names
        self.lo = lo
        self.hi = hi
        self.base = base
        self.sqrt_w = np.sqrt(weights)
        self.n_evals = 0

    def params(self, theta) -> DriverParams:
        return self.base.replace(**{n: float(v) for n, v in zip(self.names, theta)})

    def residuals(self, theta) -> np.ndarray:
        self.n_evals += 1
        err = (self.data.outputs - predict(self.params(theta), self.data)) * self.sqrt_w
        return err.ravel(order="F")

    def jacobian(self, theta, r0) -> np.ndarray:
        J = np.empty((r0.size, theta.size))
        for i in range(theta.size):
            h = max(1e-6 * abs(theta[i]), 1e-8)
            step = theta.copy()
            if step[i] + h > self.hi[i]:
                h = -h
            step[i] += h
            J[:, i] = (self.residuals(step) - r0) / h
        return J


def _damped_step(J, r, lam):
    """Solve (J'J + lam diag(J'J)) p = -J'r; diagonal scaling keeps it unit-free."""
    JtJ = J.T @ J
    g = J.T @ r
    d = np.diag(JtJ).copy()
    d[d <= 0] = 1.0
    A = JtJ + lam * np.diag(d)
    try:
        return np.linalg.solve(A, -g)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(A, -g, rcond=None)[0]


def _gauss_newton_vector(J, r, theta, lo, hi):
    """Minimum-norm Gauss-Newton vector with bound-blocked coordinates held fixed."""
    g = J.T @ r
    blocked = ((theta <= lo) & (g > 0)) | ((theta >= hi) & (g < 0))
    p = np.zeros_like(theta)
    free = ~blocked
    if np.any(free):
        p[free] = np.linalg.lstsq(J[:, free], -r, rcond=1e-12)[0]
    return p


def _expected_improvement(J, r, p) -> float:
    """Loss decrease predicted by the linearized model for step p."""
    return float(r @ r - np.sum((r + J @ p) ** 2))


def _minimize(problem: _Problem, theta0: np.ndarray, cfg: IdentConfig):
    lo, hi = problem.lo, problem.hi
    theta = np.clip(theta0.astype(float), lo, hi)
    r = problem.residuals(theta)
    loss = float(r @ r)
    if not math.isfinite(loss):
        raise NonFiniteLoss("loss is not finite at the start point")
    lam = cfg.lambda0
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        J = problem.jacobian(theta, r)
        # stopping rule on the bound-projected Gauss-Newton vector
        expected = _expected_improvement(J, r, _gauss_newton_vector(J, r, theta, lo, hi))
        if loss == 0.0 or expected <= cfg.tol * loss:
            converged = True
            break
        accepted = False
        while lam < 1e10:
            cand = np.clip(theta + _damped_step(J, r, lam), lo, hi)
            r_c = problem.residuals(cand)
            loss_c = float(r_c @ r_c)
            if math.isfinite(loss_c) and loss_c < loss:
                theta, r, loss = cand, r_c, loss_c
                lam = max(lam / 10.0, 1e-12)
                accepted = True
                break
            lam *= 10.0
        log.debug("iter %d loss %.6g lambda %.1e", it, loss, lam)
        if not accepted:
            # no descent direction left at numerical precision
            converged = True
            break
    else:
        it = cfg.max_iter
    return theta, r, loss, it, converged


def identify(data: Dataset, cfg: Optional[IdentConfig] = None) -> IdentResult:
    """Fit the free driver parameters to ``data`` by bounded Gauss-Newton with Levenberg damping."""
    cfg = cfg or IdentConfig()
    data.validate()
    names = _free_names(data, cfg)
    lo = np.array([cfg.bounds[n][0] for n in names], dtype=float)
    hi = np.array([cfg.bounds[n][1] for n in names], dtype=float)
    weights = _output_weights(data, cfg)
    base = cfg.start
    if data.mode == "manual":
        base = base.replace(K_hg=0.0)
    problem = _Problem(data, names, lo, hi, base, weights)

    rng = np.random.default_rng(cfg.seed)
    starts = [np.array([getattr(cfg.start, n) for n in names], dtype=float)]
    for _ in range(cfg.multistart - 1):
        starts.append(rng.uniform(lo, hi))

    best = None
    for index, theta0 in enumerate(starts):
        theta, r, loss, iters, converged = _minimize(problem, theta0, cfg)
        log.info("start %d: loss %.6g after %d iterations", index, loss, iters)
        if best is None or loss < best[2]:
            best = (theta, r, loss, iters, converged, index)
    theta, r, loss, iters, converged, index = best

    params = problem.params(theta)
    y_hat = predict(params, data)
    fitness = []
    for j in range(2):
        try:
            fitness.append(fit_percent(data.outputs[:, j], y_hat[:, j]))
        except ConstantReference:
            fitness.append(float("nan"))
    span = hi - lo
    at_bounds = tuple(n for n, v, a, b, s in zip(names, theta, lo, hi, span) if s > 0 and (v - a <= 1e-9 * s or b - v <= 1e-9 * s))
    return IdentResult(
        params=params,
        free=names,
        fitness=(fitness[0], fitness[1]),
        loss=loss,
        iterations=iters,
        converged=converged,
        residuals=data.outputs - y_hat,
        start=problem.params(starts[index]),
        at_bounds=at_bounds,
        start_index=index,
    )


def generate_dataset(
    theta: DriverParams,
    scenario: Optional[Scenario] = None,
    *,
    noise_sigma: Sequence[float] | float = 0.0,
    seed: int = 0,
    target_channel: str = "phi_target",
) -> Dataset:
    """Closed-loop synthetic record for identification.

    ``theta`` drives the loop as the guided driver (or the manual one when the
    scenario's guidance is disabled). The second output is the model's target
    angle by default; ``target_channel="phi"`` records the steering-wheel angle
    instead, which is what a physical rig can measure. ``noise_sigma`` is either
    a T_d standard deviation or a per-output pair.
    """
    scenario = scenario or Scenario()
    if scenario.gp.enabled:
        scenario = replace(scenario, dp_guided=theta)
    else:
        scenario = replace(scenario, dp_manual=theta)
    if target_channel not in ("phi_target", "phi"):
        raise ValueError(f"target_channel must be 'phi_target' or 'phi', got {target_channel!r}")
    sim = run(scenario)
    inputs = np.column_stack([sim["e_y"], sim["e_theta"], sim["phi"], sim["T_h"]])
    outputs = np.column_stack([sim["T_d"], sim[target_channel]])
    sigma = np.broadcast_to(np.asarray(noise_sigma, dtype=float), (2,)) if np.ndim(noise_sigma) else np.array([noise_sigma, 0.0])
    if np.any(sigma > 0):
        rng = np.random.default_rng(seed)
        outputs = outputs + rng.standard_normal(outputs.shape) * sigma
    mode = "haptic" if scenario.gp.enabled else "manual"
    meta = {f"theta.{k}": v for k, v in theta.as_dict().items()}
    meta.update(noise_T_d=float(sigma[0]), noise_phi=float(sigma[1]), seed=seed, target_channel=target_channel)
    return Dataset(scenario.log_rate, inputs, outputs, mode, meta)
