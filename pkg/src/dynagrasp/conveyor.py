"""Conveyor trajectory families and the pose observation noise model.

Trajectories are anchored to the world origin (the arm base in every
scene).  All four families are parameterized by arc length: the object
travels a path of total length `l` at constant speed `v`, so an episode's
trajectory lasts exactly l / v virtual seconds.  `theta` points from the
origin to the trajectory frame origin at distance `r`, and `d` flips the
travel direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .geom2d import Pose2, wrap_angle

FAMILIES = ("linear", "sinusoidal", "rectangular", "circular")

SINUSOIDAL_AMP = 0.08
RECTANGULAR_AMP = 0.10


@dataclass(frozen=True)
class TrajectoryParams:
    family: str
    theta: float
    r: float
    l: float
    d: int
    v: float
    amp: float = 0.0
    period: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.v <= 0 or self.l <= 0 or self.r <= 0:
            raise ValueError("v, l, r must be > 0")
        if self.d not in (1, -1):
            raise ValueError("d must be +1 or -1")

    @property
    def duration(self) -> float:
        return self.l / self.v


@dataclass(frozen=True)
class ObsNoise:
    sigma_pos: float = 0.010
    sigma_phi: float = 0.02

    def __post_init__(self):
        if self.sigma_pos < 0 or self.sigma_phi < 0:
            raise ValueError("noise sigmas must be >= 0")


def sample_params(family: str, rng: np.random.Generator) -> TrajectoryParams:
    """Draw trajectory parameters from the per-family sampling ranges."""
    theta = rng.uniform(0.0, 2.0 * math.pi)
    if family == "circular":
        r = rng.uniform(0.65, 0.9)
        l = 1.5
        v_lo, v_hi = 0.05, 0.10
    elif family in ("linear", "sinusoidal", "rectangular"):
        r = rng.uniform(0.35, 0.65)
        l = 1.0
        v_lo, v_hi = 0.02, 0.06
    else:
        raise ValueError(f"unknown family {family!r}")
    d = 1 if rng.random() < 0.5 else -1
    v = rng.uniform(v_lo, v_hi)
    amp, period = 0.0, 0.0
    if family == "sinusoidal":
        amp, period = SINUSOIDAL_AMP, l / 2.0
    elif family == "rectangular":
        amp, period = RECTANGULAR_AMP, l / 2.0
    return TrajectoryParams(family, theta, r, l, d, v, amp, period)


def _frame(params: TrajectoryParams):
    """Origin, along-track unit and lateral unit vectors of the trajectory frame."""
    u = np.array([math.cos(params.theta), math.sin(params.theta)])
    origin = params.r * u
    tangent = params.d * np.array([-u[1], u[0]])
    return origin, tangent, u


@lru_cache(maxsize=256)
def _arclength_table(params: TrajectoryParams):
    """(s_grid, u_grid) mapping arc length to baseline coordinate (sinusoidal)."""
    n = 4096
    u = np.linspace(0.0, params.l, n)
    k = 2.0 * math.pi / params.period
    slope = params.amp * k * np.cos(k * u)
    speed = np.sqrt(1.0 + slope * slope)
    s = np.concatenate([[0.0], np.cumsum((speed[1:] + speed[:-1]) * 0.5 * np.diff(u))])
    return s, u


@lru_cache(maxsize=256)
def _rect_polyline(params: TrajectoryParams):
    """Castellated polyline (u, w) vertices covering at least length l."""
    H = params.period / 2.0
    a = params.amp
    pts = [(0.0, a)]
    total = 0.0
    side = 1.0
    u = 0.0
    while total < params.l + 1e-9:
        u_next = u + H
        pts.append((u_next, side * a))
        total += H
        if total >= params.l + 1e-9:
            break
        side = -side
        pts.append((u_next, side * a))
        total += 2.0 * a
        u = u_next
    return np.array(pts)


def pose_at(params: TrajectoryParams, t: float) -> Pose2:
    """Object pose at time t; t is clamped to [0, duration]."""
    s = params.v * min(max(t, 0.0), params.duration)
    origin, tangent, lateral = _frame(params)

    if params.family == "linear":
        start = origin - (params.l / 2.0) * tangent
        pos = start + s * tangent
        heading = math.atan2(tangent[1], tangent[0])
        return Pose2(pos[0], pos[1], heading)

    if params.family == "circular":
        alpha = params.theta + params.d * s / params.r
        pos = params.r * np.array([math.cos(alpha), math.sin(alpha)])
        heading = alpha + params.d * math.pi / 2.0
        return Pose2(pos[0], pos[1], wrap_angle(heading))

    if params.family == "sinusoidal":
        s_grid, u_grid = _arclength_table(params)
        s = min(s, s_grid[-1])
        ub = float(np.interp(s, s_grid, u_grid))
        k = 2.0 * math.pi / params.period
        w = params.amp * math.sin(k * ub)
        slope = params.amp * k * math.cos(k * ub)
        start = origin - (params.l / 2.0) * tangent
        pos = start + ub * tangent + w * lateral
        direction = tangent + slope * lateral
        heading = math.atan2(direction[1], direction[0])
        return Pose2(pos[0], pos[1], heading)

    # rectangular: walk the castellated polyline at arc length s
    poly = _rect_polyline(params)
    seg_vec = np.diff(poly, axis=0)
    seg_len = np.hypot(seg_vec[:, 0], seg_vec[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    s = min(s, params.l)
    i = int(np.searchsorted(cum, s, side="right") - 1)
    i = min(i, len(seg_len) - 1)
    frac = (s - cum[i]) / seg_len[i]
    local = poly[i] + frac * seg_vec[i]
    start = origin - (params.l / 2.0) * tangent
    pos = start + local[0] * tangent + local[1] * lateral
    direction = seg_vec[i, 0] * tangent + seg_vec[i, 1] * lateral
    heading = math.atan2(direction[1], direction[0])
    return Pose2(pos[0], pos[1], heading)


def pose_at_batch(params: TrajectoryParams, ts: np.ndarray) -> np.ndarray:
    """(K, 3) object poses at the given times (vectorized pose_at)."""
    s = params.v * np.clip(ts, 0.0, params.duration)
    origin, tangent, lateral = _frame(params)
    out = np.empty((len(s), 3))

    if params.family == "linear":
        start = origin - (params.l / 2.0) * tangent
        out[:, 0] = start[0] + s * tangent[0]
        out[:, 1] = start[1] + s * tangent[1]
        out[:, 2] = math.atan2(tangent[1], tangent[0])
        return out

    if params.family == "circular":
        alpha = params.theta + params.d * s / params.r
        out[:, 0] = params.r * np.cos(alpha)
        out[:, 1] = params.r * np.sin(alpha)
        out[:, 2] = np.mod(alpha + params.d * math.pi / 2.0 + math.pi, 2 * math.pi) - math.pi
        return out

    if params.family == "sinusoidal":
        s_grid, u_grid = _arclength_table(params)
        ub = np.interp(np.minimum(s, s_grid[-1]), s_grid, u_grid)
        k = 2.0 * math.pi / params.period
        w = params.amp * np.sin(k * ub)
        slope = params.amp * k * np.cos(k * ub)
        start = origin - (params.l / 2.0) * tangent
        out[:, 0] = start[0] + ub * tangent[0] + w * lateral[0]
        out[:, 1] = start[1] + ub * tangent[1] + w * lateral[1]
        out[:, 2] = np.arctan2(tangent[1] + slope * lateral[1], tangent[0] + slope * lateral[0])
        return out

    poly = _rect_polyline(params)
    seg_vec = np.diff(poly, axis=0)
    seg_len = np.hypot(seg_vec[:, 0], seg_vec[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    sc = np.minimum(s, params.l)
    i = np.clip(np.searchsorted(cum, sc, side="right") - 1, 0, len(seg_len) - 1)
    frac = (sc - cum[i]) / seg_len[i]
    local = poly[i] + frac[:, None] * seg_vec[i]
    start = origin - (params.l / 2.0) * tangent
    out[:, 0] = start[0] + local[:, 0] * tangent[0] + local[:, 1] * lateral[0]
    out[:, 1] = start[1] + local[:, 0] * tangent[1] + local[:, 1] * lateral[1]
    direction = seg_vec[i]
    out[:, 2] = np.arctan2(
        direction[:, 0] * tangent[1] + direction[:, 1] * lateral[1],
        direction[:, 0] * tangent[0] + direction[:, 1] * lateral[0],
    )
    return out


def path_polyline(params: TrajectoryParams, n: int = 256) -> np.ndarray:
    """(n, 2) positions sampled uniformly in arc length over the whole path."""
    ts = np.linspace(0.0, params.duration, n)
    return np.array([[p.x, p.y] for p in (pose_at(params, t) for t in ts)])


def corridor_polyline(params: TrajectoryParams) -> np.ndarray:
    """Polyline hugging the true path (exact vertices for rectangular).

    Used for protected-corridor clearance checks; chord deviation from the
    true path is negligible (< 0.1 mm) for the smooth families.
    """
    origin, tangent, lateral = _frame(params)
    if params.family == "linear":
        start = origin - (params.l / 2.0) * tangent
        return np.stack([start, start + params.l * tangent])
    if params.family == "rectangular":
        poly = _rect_polyline(params)
        # cut the polyline at total arc length l
        seg_vec = np.diff(poly, axis=0)
        seg_len = np.hypot(seg_vec[:, 0], seg_vec[:, 1])
        cum = np.concatenate([[0.0], np.cumsum(seg_len)])
        keep = int(np.searchsorted(cum, params.l, side="left"))
        verts = [poly[i] for i in range(min(keep + 1, len(poly)))]
        if cum[min(keep, len(cum) - 1)] > params.l:
            frac = (params.l - cum[keep - 1]) / seg_len[keep - 1]
            verts[-1] = poly[keep - 1] + frac * seg_vec[keep - 1]
        start = origin - (params.l / 2.0) * tangent
        return np.array([start + v[0] * tangent + v[1] * lateral for v in verts])
    return path_polyline(params, n=256)


def observe(true_pose: Pose2, noise: ObsNoise, rng: np.random.Generator) -> Pose2:
    """Noisy pose estimate: Gaussian position and heading perturbations."""
    dx, dy = rng.normal(0.0, noise.sigma_pos, size=2) if noise.sigma_pos > 0 else (0.0, 0.0)
    dphi = rng.normal(0.0, noise.sigma_phi) if noise.sigma_phi > 0 else 0.0
    return Pose2(true_pose.x + dx, true_pose.y + dy, wrap_angle(true_pose.phi + dphi))
