"""Road centerline made of straight and circular segments, plus two-point perception geometry."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit

LANE_HALF_WIDTH = 1.8  # m, 3.6 m lane
MAX_PROJECTION_DISTANCE = 100.0  # m
TIE_TOLERANCE = 1e-9

# columns of RoadPath.table
_KIND, _S0, _LEN, _CURV, _X0, _Y0, _PSI0 = range(7)
STRAIGHT, ARC = 0, 1


class ProjectionError(ValueError):
    pass


class TooFarFromPath(ProjectionError):
    pass


class AmbiguousProjection(ProjectionError):
    """Two distinct path stations are equally close; ``s`` holds the smaller one."""

    def __init__(self, message: str, s: float, d: float):
        super().__init__(message)
        self.s = s
        self.d = d


@dataclass(frozen=True)
class RoadSegment:
    kind: str  # "straight" | "arc"
    length: float
    curvature: float = 0.0  # 1/m, positive = left

    def __post_init__(self):
        if self.kind not in ("straight", "arc"):
            raise ValueError(f"unknown segment kind {self.kind!r}")
        if not (math.isfinite(self.length) and self.length > 0):
            raise ValueError(f"segment length must be positive, got {self.length}")
        if self.kind == "straight" and self.curvature != 0.0:
            raise ValueError("straight segment must have zero curvature")
        if self.kind == "arc" and not (0 < abs(self.curvature) < 0.1):
            raise ValueError(f"arc curvature must satisfy 0 < |k| < 0.1, got {self.curvature}")

    @classmethod
    def straight(cls, length: float) -> "RoadSegment":
        return cls("straight", float(length), 0.0)

    @classmethod
    def arc(cls, radius: float, degrees: float) -> "RoadSegment":
        """Circular arc; a negative ``degrees`` (or radius) turns right."""
        if radius == 0 or degrees == 0:
            raise ValueError("arc needs non-zero radius and angle")
        sign = math.copysign(1.0, radius) * math.copysign(1.0, degrees)
        return cls("arc", abs(radius) * math.radians(abs(degrees)), sign / abs(radius))


class RoadPath:
    """Immutable arc-length parameterized centerline.

    Queries outside ``[0, length]`` extrapolate along the end tangents so that
    preview points beyond the course ends still have a well-defined error.
    """

    def __init__(self, segments: Sequence[RoadSegment], origin: tuple[float, float, float] = (0.0, 0.0, 0.0)):
        if not segments:
            raise ValueError("course needs at least one segment")
        self.segments = tuple(segments)
        self.origin = tuple(float(c) for c in origin)
        table = np.zeros((len(segments), 7))
        x, y, psi = self.origin
        s = 0.0
        for i, seg in enumerate(segments):
            table[i] = (STRAIGHT if seg.kind == "straight" else ARC, s, seg.length, seg.curvature, x, y, psi)
            x, y, psi = _advance(seg.kind == "arc", seg.length, seg.curvature, x, y, psi)
            s += seg.length
        table.setflags(write=False)
        self.table = table
        self.length = s
        self.end_pose = (x, y, psi)

    def __repr__(self):
        return f"RoadPath({len(self.segments)} segments, {self.length:.1f} m)"

    def pose_at(self, s: float) -> tuple[tuple[float, float], float]:
        x, y, psi = _pose_at(self.table, float(s))
        return (x, y), psi

    def segment_bounds(self, index: int) -> tuple[float, float]:
        row = self.table[index]
        return float(row[_S0]), float(row[_S0] + row[_LEN])

    def arc_indices(self) -> list[int]:
        return [i for i, seg in enumerate(self.segments) if seg.kind == "arc"]


def build_course(segments: Sequence[RoadSegment], origin=(0.0, 0.0, 0.0)) -> RoadPath:
    return RoadPath(segments, origin)


def default_course(origin=(0.0, 0.0, 0.0)) -> RoadPath:
    """Synthetic evaluation course: the first left curve spans roughly t = 60-88 s at 60 km/h."""
    return RoadPath(
        [
            RoadSegment.straight(1000.0),
            RoadSegment.arc(300.0, 90.0),
            RoadSegment.straight(500.0),
            RoadSegment.arc(300.0, -90.0),
            RoadSegment.straight(500.0),
        ],
        origin,
    )


def project_to_path(path: RoadPath, point: tuple[float, float]) -> tuple[float, float]:
    """Closest station ``s`` and signed lateral offset ``d`` (left positive)."""
    px, py = float(point[0]), float(point[1])
    cands = _candidates(path.table, px, py)
    order = np.lexsort((cands[:, 0], cands[:, 3]))
    best = cands[order[0]]
    if best[3] > MAX_PROJECTION_DISTANCE:
        raise TooFarFromPath(f"point ({px:.3f}, {py:.3f}) is {best[3]:.1f} m from the path")
    for row in cands[order[1:]]:
        if row[3] - best[3] > TIE_TOLERANCE:
            break
        if abs(row[0] - best[0]) > 1e-6:
            s_lo, d_lo = (best[0], best[1]) if best[0] < row[0] else (row[0], row[1])
            raise AmbiguousProjection(
                f"point ({px:.3f}, {py:.3f}) is equidistant from s={best[0]:.6f} and s={row[0]:.6f}",
                float(s_lo),
                float(d_lo),
            )
    return float(best[0]), float(best[1])


@dataclass(frozen=True)
class PerceptionErrors:
    e_y: float  # m, positive when the preview point is right of the centerline
    e_theta: float  # rad, positive when the road bends left of the course angle


def perception_errors(
    path: RoadPath,
    pose: tuple[float, float, float],
    beta: float,
    v: float,
    t_near: float,
    t_far: float,
) -> PerceptionErrors:
    if not (t_near > 0 and t_far >= t_near):
        raise ValueError(f"need 0 < t_near <= t_far, got {t_near}, {t_far}")
    X, Y, psi = pose
    course = psi + beta
    near = (X + v * t_near * math.cos(course), Y + v * t_near * math.sin(course))
    far = (X + v * t_far * math.cos(course), Y + v * t_far * math.sin(course))
    _, d_near = project_to_path(path, near)
    s_far, _ = project_to_path(path, far)
    _, heading = path.pose_at(s_far)
    return PerceptionErrors(-d_near, wrap_angle(heading - course))


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.remainder(a, 2.0 * math.pi)
    return math.pi if w == -math.pi else w


# Compiled geometry kernels.


@njit(cache=True)
def _wrap(a):
    """Wrap to [-pi, pi)."""
    return a - 2.0 * math.pi * math.floor((a + math.pi) / (2.0 * math.pi))


@njit(cache=True)
def _advance(is_arc, ds, k, x, y, psi):
    if not is_arc:
        return x + ds * math.cos(psi), y + ds * math.sin(psi), psi
    psi1 = psi + k * ds
    return x + (math.sin(psi1) - math.sin(psi)) / k, y - (math.cos(psi1) - math.cos(psi)) / k, psi1


@njit(cache=True)
def _pose_at(table, s):
    n = table.shape[0]
    i = 0
    while i < n - 1 and s >= table[i + 1, _S0]:
        i += 1
    ds = s - table[i, _S0]
    if ds < 0.0 or ds > table[i, _LEN]:
        # off the ends: straight extrapolation along the end tangent
        if ds < 0.0:
            return _advance(False, ds, 0.0, table[i, _X0], table[i, _Y0], table[i, _PSI0])
        x, y, psi = _advance(table[i, _KIND] == ARC, table[i, _LEN], table[i, _CURV], table[i, _X0], table[i, _Y0], table[i, _PSI0])
        return _advance(False, ds - table[i, _LEN], 0.0, x, y, psi)
    return _advance(table[i, _KIND] == ARC, ds, table[i, _CURV], table[i, _X0], table[i, _Y0], table[i, _PSI0])


@njit(cache=True)
def _segment_candidate(table, i, px, py):
    """Closest point of segment i: (s, d, heading, distance)."""
    n = table.shape[0]
    s0 = table[i, _S0]
    L = table[i, _LEN]
    x0 = table[i, _X0]
    y0 = table[i, _Y0]
    psi0 = table[i, _PSI0]
    lo = -math.inf if i == 0 else 0.0
    hi = math.inf if i == n - 1 else L
    if table[i, _KIND] == STRAIGHT:
        c = math.cos(psi0)
        sn = math.sin(psi0)
        dx = px - x0
        dy = py - y0
        t = dx * c + dy * sn
        t = min(max(t, lo), hi)
        fx = x0 + t * c
        fy = y0 + t * sn
        rx = px - fx
        ry = py - fy
        return s0 + t, c * ry - sn * rx, psi0, math.hypot(rx, ry)
    k = table[i, _CURV]
    cx = x0 - math.sin(psi0) / k
    cy = y0 + math.cos(psi0) / k
    rx = px - cx
    ry = py - cy
    if k > 0.0:
        theta = math.atan2(rx, -ry)
    else:
        theta = math.atan2(-rx, ry)
    mid = psi0 + 0.5 * k * L
    dm = _wrap(theta - mid)
    t = 0.5 * L + dm / k
    if t < 0.0 or t > L:
        # beyond the arc ends: clamp, extrapolating straight only past the course ends
        if t < 0.0 and i == 0:
            c = math.cos(psi0)
            sn = math.sin(psi0)
            t = (px - x0) * c + (py - y0) * sn
            t = min(t, 0.0)
            fx = x0 + t * c
            fy = y0 + t * sn
            qx = px - fx
            qy = py - fy
            return s0 + t, c * qy - sn * qx, psi0, math.hypot(qx, qy)
        if t > L and i == n - 1:
            ex, ey, epsi = _advance(True, L, k, x0, y0, psi0)
            c = math.cos(epsi)
            sn = math.sin(epsi)
            u = max((px - ex) * c + (py - ey) * sn, 0.0)
            fx = ex + u * c
            fy = ey + u * sn
            qx = px - fx
            qy = py - fy
            return s0 + L + u, c * qy - sn * qx, epsi, math.hypot(qx, qy)
        t = min(max(t, 0.0), L)
    fx, fy, heading = _advance(True, t, k, x0, y0, psi0)
    qx = px - fx
    qy = py - fy
    c = math.cos(heading)
    sn = math.sin(heading)
    return s0 + t, c * qy - sn * qx, heading, math.hypot(qx, qy)


@njit(cache=True)
def _candidates(table, px, py):
    n = table.shape[0]
    out = np.empty((n, 4))
    for i in range(n):
        s, d, h, dist = _segment_candidate(table, i, px, py)
        out[i, 0] = s
        out[i, 1] = d
        out[i, 2] = h
        out[i, 3] = dist
    return out


@njit(cache=True)
def _project(table, px, py):
    """Nearest candidate; ties resolve to the smaller station. Returns (s, d, heading, distance)."""
    best_s, best_d, best_h, best_dist = _segment_candidate(table, 0, px, py)
    for i in range(1, table.shape[0]):
        s, d, h, dist = _segment_candidate(table, i, px, py)
        if dist < best_dist - TIE_TOLERANCE:
            best_s, best_d, best_h, best_dist = s, d, h, dist
    return best_s, best_d, best_h, best_dist


@njit(cache=True)
def _two_point_errors(table, X, Y, course, v, t_near, t_far):
    """(e_y, e_theta, worst projection distance) for preview times t_near, t_far."""
    c = math.cos(course)
    sn = math.sin(course)
    dn = v * t_near
    df = v * t_far
    _, d_near, _, dist_n = _project(table, X + dn * c, Y + dn * sn)
    _, _, heading, dist_f = _project(table, X + df * c, Y + df * sn)
    e_theta = _wrap(heading - course)
    return -d_near, e_theta, max(dist_n, dist_f)
