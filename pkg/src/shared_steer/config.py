"""Sectioned key=value run configuration.

Example::

    [scenario]
    duration = 120
    reliance = mid
    driver = 1

    [course]
    segment = straight,1000
    segment = arc,300,90

``segment`` may repeat, so the format is read line by line rather than with
configparser, which rejects duplicate keys. Every error carries the line number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Iterable, Optional

from . import presets
from .driver import FIELDS as DRIVER_FIELDS
from .driver import DriverParams
from .guidance import FIELDS as GUIDANCE_FIELDS
from .guidance import GuidanceParams
from .ident import FREE_PARAMS, IdentConfig
from .plant import SteeringParams, VehicleParams
from .road import RoadPath, RoadSegment, default_course
from .simulator import Failure, Scenario

SECTIONS = ("vehicle", "steering", "driver", "manual", "guidance", "course", "scenario", "ident")
SCENARIO_KEYS = ("duration", "dt", "log_rate", "reliance", "driver", "t_fail", "t_response")
IDENT_KEYS = ("multistart", "tol", "max_iter", "seed", "weights", "lambda0") + FREE_PARAMS
_BOOL = {"true": True, "false": False, "1": True, "0": False, "on": True, "off": False, "yes": True, "no": False}


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


@dataclass
class Config:
    vehicle: dict = field(default_factory=dict)
    steering: dict = field(default_factory=dict)
    driver: dict = field(default_factory=dict)
    manual: dict = field(default_factory=dict)
    guidance: dict = field(default_factory=dict)
    course: list = field(default_factory=list)  # RoadSegment
    origin: Optional[tuple] = None
    scenario: dict = field(default_factory=dict)
    ident: dict = field(default_factory=dict)

    def vehicle_params(self) -> VehicleParams:
        return VehicleParams(**self.vehicle)

    def steering_params(self) -> SteeringParams:
        return SteeringParams(**self.steering)

    def guidance_params(self) -> GuidanceParams:
        return GuidanceParams(**self.guidance)

    def driver_params(self) -> DriverParams:
        return replace(presets.SIMULATION_DRIVER, **self.driver)

    def road(self) -> RoadPath:
        origin = self.origin or (0.0, 0.0, 0.0)
        if not self.course:
            return default_course(origin)
        return RoadPath(self.course, origin)

    def scenario_obj(self, reliance: Optional[str] = None, driver: Optional[int] = None) -> Scenario:
        """Scenario described by this config; ``reliance``/``driver`` override the file.

        A reliance level sets K_d, K_hg and the guidance switch of the guided
        driver; the driver number sets the processing delay t_p.
        """
        sc = self.scenario
        reliance = reliance or sc.get("reliance")
        driver = driver if driver is not None else sc.get("driver")
        base = self.driver_params()
        if driver is not None:
            base = base.replace(t_p=presets.DRIVER_DELAYS[driver])
        gp = self.guidance_params()
        K_d, K_hg, _ = presets.RELIANCE["manual"]
        guided = base
        if reliance is not None:
            level_K_d, level_K_hg, enabled = presets.reliance_preset(reliance)
            guided = base.replace(K_d=level_K_d, K_hg=level_K_hg)
            gp = replace(gp, enabled=enabled)
        manual = base.replace(K_d=K_d, K_hg=K_hg)
        if self.manual:
            manual = replace(manual, **self.manual)
        failure = Failure(sc.get("t_fail", 70.0), sc.get("t_response", 1.0)) if "t_fail" in sc else None
        scenario = Scenario(
            course=self.road(),
            vp=self.vehicle_params(),
            sp=self.steering_params(),
            dp_guided=guided,
            dp_manual=manual,
            gp=gp,
            failure=failure,
            reliance=reliance,
            **{k: sc[k] for k in ("duration", "dt", "log_rate") if k in sc},
        )
        scenario.validate()
        return scenario

    def ident_config(self, multistart: Optional[int] = None) -> IdentConfig:
        bounds = dict(presets.IDENT_BOUNDS)
        opts = {}
        for key, value in self.ident.items():
            if key in FREE_PARAMS:
                bounds[key] = value
            else:
                opts[key] = value
        if multistart is not None:
            opts["multistart"] = multistart
        return IdentConfig(bounds=bounds, **opts)


def _number(text: str, key: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text!r}", line) from None
    if not math.isfinite(value):
        raise ConfigError(f"{key}: value must be finite", line)
    return value


def _integer(text: str, key: str, line: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}", line) from None


def _pair(text: str, key: str, line: int) -> tuple[float, float]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2:
        raise ConfigError(f"{key}: expected two comma-separated numbers, got {text!r}", line)
    return _number(parts[0], key, line), _number(parts[1], key, line)


def _boolean(text: str, key: str, line: int) -> bool:
    try:
        return _BOOL[text.lower()]
    except KeyError:
        raise ConfigError(f"{key}: expected true/false, got {text!r}", line) from None


def parse_segment(text: str, line: Optional[int] = None) -> RoadSegment:
    """``straight,<length>`` or ``arc,<radius>,<degrees>``."""
    parts = [p.strip() for p in text.split(",")]
    kind = parts[0].lower()
    try:
        if kind == "straight" and len(parts) == 2:
            return RoadSegment.straight(_number(parts[1], "segment", line))
        if kind == "arc" and len(parts) == 3:
            return RoadSegment.arc(_number(parts[1], "segment", line), _number(parts[2], "segment", line))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"segment: {exc}", line) from None
    raise ConfigError(f"malformed segment {text!r}; expected straight,<len> or arc,<radius>,<deg>", line)


def _set(cfg: Config, section: str, key: str, value: str, line: int) -> None:
    if section in ("vehicle", "steering"):
        names = [f.name for f in fields(VehicleParams if section == "vehicle" else SteeringParams)]
        if key not in names:
            raise ConfigError(f"unknown key {section}.{key}", line)
        getattr(cfg, section)[key] = _number(value, key, line)
    elif section in ("driver", "manual"):
        if key not in DRIVER_FIELDS:
            raise ConfigError(f"unknown key {section}.{key}", line)
        getattr(cfg, section)[key] = _number(value, key, line)
    elif section == "guidance":
        if key == "enabled":
            cfg.guidance[key] = _boolean(value, key, line)
        elif key in GUIDANCE_FIELDS:
            cfg.guidance[key] = _number(value, key, line)
        else:
            raise ConfigError(f"unknown key guidance.{key}", line)
    elif section == "course":
        if key == "segment":
            cfg.course.append(parse_segment(value, line))
        elif key == "origin":
            parts = [p.strip() for p in value.split(",")]
            if len(parts) != 3:
                raise ConfigError("origin: expected x,y,heading", line)
            cfg.origin = tuple(_number(p, key, line) for p in parts)
        else:
            raise ConfigError(f"unknown key course.{key}", line)
    elif section == "scenario":
        if key not in SCENARIO_KEYS:
            raise ConfigError(f"unknown key scenario.{key}", line)
        if key == "reliance":
            if value not in presets.RELIANCE:
                raise ConfigError(f"reliance: expected one of {sorted(presets.RELIANCE)}, got {value!r}", line)
            cfg.scenario[key] = value
        elif key == "driver":
            n = _integer(value, key, line)
            if n not in presets.DRIVER_DELAYS:
                raise ConfigError(f"driver: expected 1, 2 or 3, got {n}", line)
            cfg.scenario[key] = n
        else:
            cfg.scenario[key] = _number(value, key, line)
    elif section == "ident":
        if key not in IDENT_KEYS:
            raise ConfigError(f"unknown key ident.{key}", line)
        if key in FREE_PARAMS or key == "weights":
            cfg.ident[key] = _pair(value, key, line)
        elif key in ("multistart", "max_iter", "seed"):
            cfg.ident[key] = _integer(value, key, line)
        else:
            cfg.ident[key] = _number(value, key, line)


def parse_config(lines: Iterable[str]) -> Config:
    cfg = Config()
    section = None
    for number, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        if text.startswith("[") and text.endswith("]"):
            section = text[1:-1].strip()
            if section not in SECTIONS:
                raise ConfigError(f"unknown section [{section}]", number)
            continue
        if "=" not in text:
            raise ConfigError(f"expected key = value, got {text!r}", number)
        key, value = (part.strip() for part in text.split("=", 1))
        if section is None:
            raise ConfigError(f"key {key!r} outside of any section", number)
        _set(cfg, section, key, value, number)
    _check(cfg)
    return cfg


def _check(cfg: Config) -> None:
    """Build every parameter object once so that range errors surface before any run."""
    try:
        cfg.vehicle_params()
        cfg.steering_params()
        cfg.driver_params()
        cfg.guidance_params()
        cfg.scenario_obj()
        cfg.ident_config()
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: Optional[str]) -> Config:
    if path is None:
        cfg = Config()
        _check(cfg)
        return cfg
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None


def config_from_header(header: dict) -> Config:
    """Rebuild a Config from a run header such as ``Scenario.header()``."""
    cfg = Config()
    for name, value in header.items():
        prefix, _, key = name.partition(".")
        if prefix in ("vehicle", "steering", "driver", "manual", "guidance"):
            getattr(cfg, prefix)[key] = value
        elif prefix == "failure":
            cfg.scenario[key] = value
        elif name in ("duration", "dt", "log_rate"):
            cfg.scenario[name] = value
    return cfg
