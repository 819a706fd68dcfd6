"""Published parameter sets: simulation defaults, identification bounds and
per-subject identification results used as example parameter vectors."""

from __future__ import annotations

from .driver import DriverParams
from .guidance import GuidanceParams
from .plant import SteeringParams, VehicleParams

VEHICLE = VehicleParams()
STEERING = SteeringParams()
GUIDANCE = GuidanceParams()

# identification start point and search box
IDENT_DEFAULT = DriverParams(a1=0.1, a2=0.01, a3=3.7, t_p=0.1, K_d=3.0, K_hg=0.5, K_nms=1.0, t_nms=0.1)
IDENT_BOUNDS = {
    "a1": (0.0, 0.5),
    "a2": (0.0, 0.1),
    "a3": (3.0, 5.0),
    "t_p": (0.01, 0.3),
    "K_d": (1.0, 5.0),
    "K_hg": (0.0, 1.0),
}

# driver gains for the closed-loop evaluations; K_d, K_hg and t_p come from
# the reliance level and the driver's attention level
SIMULATION_DRIVER = DriverParams(a1=0.1, a2=0.05, a3=3.7, t_p=0.1, K_d=3.0, K_hg=0.5, K_nms=1.0, t_nms=0.1, t_n=0.3, t_f=1.0)

DRIVER_DELAYS = {1: 0.1, 2: 0.3, 3: 0.5}

# level -> (K_d, K_hg, guidance enabled)
RELIANCE = {
    "high": (2.0, 0.0, True),
    "mid": (3.0, 0.5, True),
    "low": (4.0, 1.0, True),
    "manual": (4.0, 1.0, False),
}
RELIANCE_ORDER = ("manual", "low", "mid", "high")

# (a1, a2, a3, t_p, K_d, fitness %) per subject, manual driving
TABLE5 = {
    1: (0.068, 0.029, 3.699, 0.090, 3.774, 78.000),
    2: (0.060, 0.015, 3.442, 0.169, 3.506, 72.395),
    3: (0.066, 0.019, 3.656, 0.014, 3.861, 79.452),
    4: (0.097, 0.019, 3.759, 0.041, 3.809, 76.801),
    5: (0.082, 0.011, 3.374, 0.297, 3.646, 72.383),
    6: (0.081, 0.009, 3.502, 0.300, 3.674, 73.455),
    7: (0.053, 0.023, 3.530, 0.027, 3.759, 74.188),
    8: (0.075, 0.026, 3.729, 0.023, 3.947, 81.110),
    9: (0.080, 0.016, 3.744, 0.120, 3.649, 73.171),
    10: (0.085, 0.014, 3.428, 0.090, 3.732, 77.894),
    11: (0.049, 0.029, 3.561, 0.057, 3.856, 79.559),
    12: (0.078, 0.029, 3.298, 0.086, 3.794, 77.215),
    13: (0.074, 0.015, 3.523, 0.038, 3.719, 77.653),
    14: (0.066, 0.020, 3.627, 0.010, 3.981, 79.143),
}

# (a1, a2, a3, t_p, K_d, K_hg, fitness %) per subject, haptic guidance
TABLE6 = {
    1: (0.100, 0.029, 3.781, 0.034, 3.249, 0.526, 69.099),
    2: (0.120, 0.027, 3.650, 0.300, 2.888, 0.393, 68.291),
    3: (0.047, 0.025, 3.601, 0.300, 2.781, 0.421, 52.413),
    4: (0.085, 0.025, 3.803, 0.184, 3.260, 0.509, 72.441),
    5: (0.060, 0.023, 3.637, 0.229, 4.056, 0.926, 73.700),
    6: (0.111, 0.048, 3.711, 0.010, 2.300, 0.002, 66.319),
    7: (0.053, 0.014, 3.672, 0.300, 3.859, 0.783, 72.804),
    8: (0.049, 0.025, 3.692, 0.017, 3.992, 0.971, 73.317),
    9: (0.058, 0.014, 3.694, 0.300, 2.492, 0.137, 63.885),
    10: (0.067, 0.023, 3.517, 0.124, 3.227, 0.392, 73.111),
    11: (0.061, 0.029, 3.566, 0.300, 3.593, 0.615, 69.442),
    12: (0.066, 0.033, 3.490, 0.010, 2.387, 0.008, 71.005),
    13: (0.086, 0.003, 3.476, 0.046, 2.125, 0.035, 66.517),
    14: (0.047, 0.011, 3.620, 0.018, 3.945, 0.858, 73.599),
}


def table5_driver(row: int, base: DriverParams = SIMULATION_DRIVER) -> DriverParams:
    if row not in TABLE5:
        raise KeyError(f"manual-driving table has rows 1-14, got {row}")
    a1, a2, a3, t_p, K_d, _ = TABLE5[row]
    return base.replace(a1=a1, a2=a2, a3=a3, t_p=t_p, K_d=K_d)


def table6_driver(row: int, base: DriverParams = SIMULATION_DRIVER) -> DriverParams:
    if row not in TABLE6:
        raise KeyError(f"haptic-guidance table has rows 1-14, got {row}")
    a1, a2, a3, t_p, K_d, K_hg, _ = TABLE6[row]
    return base.replace(a1=a1, a2=a2, a3=a3, t_p=t_p, K_d=K_d, K_hg=K_hg)


def reliance_preset(level: str) -> tuple[float, float, bool]:
    """(K_d, K_hg, guidance enabled); K_hg is irrelevant for ``manual``."""
    try:
        return RELIANCE[level]
    except KeyError:
        raise ValueError(f"unknown reliance level {level!r}; expected one of {sorted(RELIANCE)}") from None
