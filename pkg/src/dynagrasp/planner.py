"""Bidirectional RRT in joint space under a deterministic virtual-time budget.

Planner cost is charged in virtual seconds (c_cc per configuration
collision check, c_ext per tree extension) instead of wall-clock time, so
results are machine-independent: the planner returns its first valid path
as soon as the trees connect, and fails with elapsed == budget the moment
charging the next primitive would overrun the budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._fastcol import birrt_core, config_free, pack_obstacles
from .arm import ArmModel

DEFAULT_EXTEND_STEP = 0.2  # rad, max per-joint motion per extension
DEFAULT_CHECK_RESOLUTION = 0.05  # rad, per-joint edge check spacing


@dataclass(frozen=True)
class CostModel:
    """Virtual-second prices for the pipeline's compute primitives."""

    c_cc: float = 2e-3  # per collision check (set by harness `calibrate`)
    c_ext: float = 8e-4  # per tree extension
    c_pred: float = 0.02  # per predictor query
    c_ik: float = 0.010  # per IK attempt

    def __post_init__(self):
        if min(self.c_cc, self.c_ext, self.c_pred, self.c_ik) <= 0:
            raise ValueError("all primitive costs must be > 0")


@dataclass
class PlanResult:
    success: bool
    path: list  # list of joint configs; empty on failure
    elapsed: float
    checks: int
    extensions: int


@dataclass
class TimedPath:
    configs: np.ndarray  # (K, n)
    times: np.ndarray  # (K,), strictly increasing from 0

    @property
    def duration(self) -> float:
        return float(self.times[-1])


class PlannerContractError(ValueError):
    """The caller violated a planner precondition (e.g. start in collision)."""


def birrt_plan(
    model: ArmModel,
    obstacles,
    start,
    goal,
    budget: float,
    cost: CostModel,
    rng: np.random.Generator,
    packed=None,
    extend_step: float = DEFAULT_EXTEND_STEP,
    resolution: float = DEFAULT_CHECK_RESOLUTION,
) -> PlanResult:
    """Plan from start to goal among static obstacles within `budget`.

    Deterministic for a given rng.  Raises PlannerContractError when the
    start configuration is invalid; an invalid goal is an ordinary failure
    that consumes the whole budget.  `packed` may carry pre-packed obstacle
    arrays (see _fastcol.pack_obstacles) to skip per-call packing.
    """
    if budget < 0:
        raise ValueError("budget must be >= 0")
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    circs, rects = packed if packed is not None else pack_obstacles(obstacles)

    lengths = np.asarray(model.link_lengths, dtype=float)
    bx, by, bphi = model.base_pose.x, model.base_pose.y, model.base_pose.phi

    charged = 0.0
    checks = 0

    # start validity: one charged check; invalid start is a contract error
    if not model.within_limits(start):
        raise PlannerContractError("start configuration violates joint limits")
    if charged + cost.c_cc > budget:
        return PlanResult(False, [], budget, checks, 0)
    charged += cost.c_cc
    checks += 1
    if not config_free(start, lengths, bx, by, bphi, model.link_radius, circs, rects):
        raise PlannerContractError("start configuration is in collision")
    if np.array_equal(start, goal):
        return PlanResult(True, [start.copy()], charged, checks, 0)

    # goal validity: an unreachable goal exhausts the budget
    if charged + cost.c_cc > budget:
        return PlanResult(False, [], budget, checks, 0)
    charged += cost.c_cc
    checks += 1
    if not model.within_limits(goal) or not config_free(
        goal, lengths, bx, by, bphi, model.link_radius, circs, rects
    ):
        return PlanResult(False, [], budget, checks, 0)

    # every sample consumed charges at least c_ext + c_cc, so this many
    # draws can never run out before the budget does
    n_samples = int((budget - charged) / (cost.c_ext + cost.c_cc)) + 2
    lo, hi = model.limits_lo, model.limits_hi
    samples = rng.uniform(lo, hi, size=(n_samples, model.n))
    # bias a fraction of draws toward the opposite tree's root: grasp goals
    # sit close to the object footprint, where uniform sampling rarely lands
    biased = rng.random(n_samples) < 0.15
    noise = 0.35 * rng.standard_normal((n_samples, model.n))
    even = np.arange(n_samples) % 2 == 0
    anchors = np.where(even[:, None], goal[None, :], start[None, :])
    samples = np.where(biased[:, None], np.clip(anchors + noise, lo, hi), samples)
    # first sample is the goal itself: the straight start-goal edge resolves
    # the frequent tiny re-plan of an arm already parked at the grasp
    samples[0] = goal

    ok, path, charged, checks, exts = birrt_core(
        start,
        goal,
        lengths,
        bx,
        by,
        bphi,
        model.link_radius,
        circs,
        rects,
        budget,
        charged,
        checks,
        0,
        cost.c_cc,
        cost.c_ext,
        extend_step,
        resolution,
        samples,
    )
    if not ok:
        return PlanResult(False, [], budget, checks, exts)
    return PlanResult(True, [row.copy() for row in path], charged, checks, exts)


def retime(path, max_joint_speed: float) -> TimedPath:
    """Assign arrival times so the fastest joint moves at max_joint_speed."""
    if not len(path):
        raise ValueError("cannot retime an empty path")
    configs = [np.asarray(path[0], dtype=float)]
    times = [0.0]
    for q in path[1:]:
        q = np.asarray(q, dtype=float)
        dt = float(np.abs(q - configs[-1]).max()) / max_joint_speed
        if dt == 0.0:
            continue  # drop duplicate waypoints
        configs.append(q)
        times.append(times[-1] + dt)
    return TimedPath(np.array(configs), np.array(times))


def sample_state_at(timed_path: TimedPath, t: float) -> np.ndarray:
    """Joint configuration at time t along the path (clamped to the end)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    times = timed_path.times
    if t >= times[-1]:
        return timed_path.configs[-1].copy()
    i = int(np.searchsorted(times, t, side="right") - 1)
    t0, t1 = times[i], times[i + 1]
    frac = (t - t0) / (t1 - t0)
    return timed_path.configs[i] + frac * (timed_path.configs[i + 1] - timed_path.configs[i])
