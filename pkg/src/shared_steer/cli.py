"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 simulation divergence,
4 data error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import csvio, presets
from .config import ConfigError, load_config
from .csvio import DataError
from .driver import DriverParams
from .ident import ConstantReference, NonFiniteLoss, generate_dataset, identify
from .simulator import (
    DivergenceError,
    Failure,
    compute_metrics,
    first_curve_mask,
    post_failure_mask,
    run,
    run_many,
)

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_DATA = 0, 2, 3, 4
OUT_ENV = "SHARED_STEER_OUT"

log = logging.getLogger("shared_steer")


def out_dir(args) -> Path:
    path = Path(os.environ.get(OUT_ENV) or args.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def parse_theta(source: str, base: DriverParams) -> tuple[DriverParams, str]:
    """``preset``, ``table5:<row>`` or ``table6:<row>`` -> (parameters, dataset mode)."""
    if source == "preset":
        return base, "haptic"
    kind, _, row = source.partition(":")
    if kind not in ("table5", "table6") or not row:
        raise ConfigError(f"theta source must be preset, table5:<row> or table6:<row>, got {source!r}")
    try:
        index = int(row)
        if kind == "table5":
            return presets.table5_driver(index, base), "manual"
        return presets.table6_driver(index, base), "haptic"
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad theta row {row!r}: {exc}") from None


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    scenario = cfg.scenario_obj(args.reliance, args.driver)
    sim = run(scenario)
    metrics = compute_metrics(sim)
    extra = {}
    if scenario.course.arc_indices():
        mask = first_curve_mask(sim, scenario.course)
        if mask.any():
            extra["first_curve_mean_abs_lateral"] = compute_metrics(sim, mask=mask).mean_abs_lateral
    dest = out_dir(args)
    csvio.write_simlog(dest / "simlog.csv", sim)
    csvio.write_metrics(dest / "metrics.txt", metrics, extra)
    print(
        f"simulated {len(sim)} samples; mean |lateral error| {metrics.mean_abs_lateral:.4f} m, "
        f"max {metrics.max_abs_lateral:.4f} m, lane departure {str(metrics.lane_departure).lower()}"
    )
    return EXIT_OK


def _fig8(cfg, dest: Path) -> list:
    grid = [(d, level) for d in sorted(presets.DRIVER_DELAYS) for level in presets.RELIANCE_ORDER]
    scenarios = [replace(cfg.scenario_obj(level, d), failure=None) for d, level in grid]
    logs = run_many(scenarios)
    rows = []
    for (d, level), sc, sim in zip(grid, scenarios, logs):
        csvio.write_trace(dest / f"fig8_driver{d}_{level}.csv", sim, {"driver": d, "reliance": level})
        rows.append([d, level, compute_metrics(sim, mask=first_curve_mask(sim, sc.course)).mean_abs_lateral])
    for d in sorted(presets.DRIVER_DELAYS):
        values = [r[2] for r in rows if r[0] == d]
        ok = all(a >= b for a, b in zip(values, values[1:]))
        gap = values[0] - values[-1]
        for r in rows:
            if r[0] == d:
                r += [gap, ok]
    csvio.write_rows(
        dest / "fig8_summary.csv", ("driver", "reliance", "curve_mean_abs_lateral", "manual_minus_high", "monotone"), rows
    )
    return rows


def _fig9(cfg, dest: Path) -> list:
    t_fail = cfg.scenario.get("t_fail", 70.0)
    t_response = cfg.scenario.get("t_response", 1.0)
    levels = ("low", "mid", "high")
    grid = [(d, level) for d in sorted(presets.DRIVER_DELAYS) for level in levels]
    failed = [replace(cfg.scenario_obj(level, d), failure=Failure(t_fail, t_response)) for d, level in grid]
    nominal = [replace(sc, failure=None) for sc in failed]
    logs = run_many(failed + nominal)
    rows = []
    for i, ((d, level), sc) in enumerate(zip(grid, failed)):
        sim, ref = logs[i], logs[i + len(failed)]
        csvio.write_trace(dest / f"fig9_driver{d}_{level}.csv", sim, {"driver": d, "reliance": level, "t_fail": t_fail})
        after = sim["t"] >= t_fail - 1e-9
        peak = float(np.abs(sim["lateral_error"][post_failure_mask(sim, sc.course, t_fail)]).max())
        max_th = float(np.abs(sim["T_h"][after]).max())
        pre_match = bool(np.array_equal(sim.values[~after], ref.values[~after]))
        rows.append([d, level, peak, max_th, pre_match])
    for d in sorted(presets.DRIVER_DELAYS):
        peaks = [r[2] for r in rows if r[0] == d]
        ok = all(a < b for a, b in zip(peaks, peaks[1:]))
        for r in rows:
            if r[0] == d:
                r.append(ok)
    csvio.write_rows(
        dest / "fig9_summary.csv",
        ("driver", "reliance", "post_failure_peak_lateral", "max_abs_T_h_after_fail", "pre_failure_match", "increasing"),
        rows,
    )
    return rows


def cmd_scenario(args) -> int:
    cfg = load_config(args.config)
    dest = out_dir(args)
    if args.preset == "fig8":
        rows = _fig8(cfg, dest)
        for r in rows:
            print(f"driver {r[0]} {r[1]:>6}: first-curve mean |lateral error| {r[2]:.4f} m  monotone={str(r[4]).lower()}")
    else:
        rows = _fig9(cfg, dest)
        for r in rows:
            print(
                f"driver {r[0]} {r[1]:>4}: post-failure peak {r[2]:.4f} m  max |T_h| after failure {r[3]:g}  "
                f"increasing={str(r[5]).lower()}"
            )
    return EXIT_OK


def cmd_identify(args) -> int:
    cfg = load_config(args.config)
    ident_cfg = cfg.ident_config(args.multistart)
    data = csvio.read_dataset(args.dataset, args.mode)
    try:
        result = identify(data, ident_cfg)
    except (NonFiniteLoss, ConstantReference) as exc:
        raise DataError(str(exc)) from None
    dest = out_dir(args)
    csvio.write_ident_result(dest / "ident_result.txt", result, {"mode": data.mode, "samples": len(data)})
    csvio.write_residuals(dest / "residuals.csv", result, data.rate)
    for name, value in result.estimates().items():
        print(f"{name} = {value:.4f}")
    print(f"fitness T_d: {result.fitness[0]:.2f}%")
    print(f"fitness phi: {result.fitness[1]:.2f}%")
    if not result.converged:
        print("warning: not converged within the iteration limit")
    return EXIT_OK


def cmd_gen_data(args) -> int:
    cfg = load_config(args.config)
    if not args.noise_sigma >= 0:
        raise ConfigError(f"--noise-sigma must be >= 0, got {args.noise_sigma}")
    theta, mode = parse_theta(args.theta, cfg.driver_params())
    if mode == "haptic" and args.reliance == "manual":
        raise ConfigError("haptic-guidance parameters need guidance enabled; drop --reliance manual")
    scenario = cfg.scenario_obj(args.reliance, args.driver)
    scenario = replace(scenario, gp=replace(scenario.gp, enabled=mode == "haptic"), failure=None)
    data = generate_dataset(theta, scenario, noise_sigma=args.noise_sigma, seed=args.seed)
    data.meta = {"theta_source": args.theta, **data.meta}
    dest = out_dir(args)
    path = dest / "dataset.csv"
    csvio.write_dataset(path, data)
    print(f"wrote {len(data)} samples ({data.mode}) to {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shared-steer", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, run_flags=True):
        p.add_argument("--config", help="sectioned key=value file; built-in defaults when omitted")
        p.add_argument("--out-dir", default="out", help=f"output directory (overridden by ${OUT_ENV})")
        if run_flags:
            p.add_argument("--reliance", choices=sorted(presets.RELIANCE))
            p.add_argument("--driver", type=int, choices=sorted(presets.DRIVER_DELAYS), help="attention level (sets t_p)")

    p = sub.add_parser("simulate", help="closed-loop run to simlog.csv and metrics.txt")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("scenario", help="reliance sweep (fig8) or guidance failure sweep (fig9)")
    p.add_argument("preset", choices=("fig8", "fig9"))
    common(p, run_flags=False)
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("identify", help="fit driver parameters to a dataset CSV")
    p.add_argument("dataset")
    common(p, run_flags=False)
    p.add_argument("--multistart", type=int)
    p.add_argument("--mode", choices=("manual", "haptic"), help="override the mode recorded in the file")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("gen-data", help="synthetic identification dataset")
    common(p)
    p.add_argument("--theta", default="preset", help="preset | table5:<row> | table6:<row>")
    p.add_argument("--noise-sigma", type=float, default=0.0, help="white noise on T_d, N m")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_data)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"simulation diverged: {exc} (t={exc.t:.3f} s)", file=sys.stderr)
        return EXIT_DIVERGED
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
