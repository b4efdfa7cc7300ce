"""Planar N-link revolute arm: FK, analytic Jacobian, and restart-based IK.

IK runs all restarts in lockstep as one batched damped-least-squares
iteration, which keeps the call deterministic for a given rng while staying
fast enough for in-episode use.  Joint configurations are plain float
ndarrays of length n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._fastcol import dls_ik_core
from .geom2d import Capsule, Pose2, wrap_angle

DEFAULT_LINK_LENGTHS = (0.3, 0.25, 0.2, 0.1)


@dataclass(frozen=True)
class ArmModel:
    link_lengths: tuple = DEFAULT_LINK_LENGTHS
    joint_limits: tuple = None  # ((lo, hi), ...) per joint
    max_joint_speed: float = 3.0  # rad/s
    base_pose: Pose2 = field(default_factory=lambda: Pose2(0.0, 0.0, 0.0))
    link_radius: float = 0.02

    def __post_init__(self):
        if len(self.link_lengths) < 2 or any(l <= 0 for l in self.link_lengths):
            raise ValueError("need >= 2 links with positive lengths")
        if self.joint_limits is None:
            object.__setattr__(
                self, "joint_limits", tuple((-math.pi, math.pi) for _ in self.link_lengths)
            )
        if len(self.joint_limits) != len(self.link_lengths):
            raise ValueError("one joint limit pair per link")
        if any(lo >= hi for lo, hi in self.joint_limits):
            raise ValueError("joint limits must satisfy lo < hi")
        if self.max_joint_speed <= 0:
            raise ValueError("max_joint_speed must be > 0")

    @property
    def n(self) -> int:
        return len(self.link_lengths)

    @property
    def reach(self) -> float:
        return float(sum(self.link_lengths))

    @property
    def limits_lo(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.joint_limits])

    @property
    def limits_hi(self) -> np.ndarray:
        return np.array([hi for _, hi in self.joint_limits])

    def within_limits(self, q) -> bool:
        q = np.asarray(q)
        return bool((q >= self.limits_lo - 1e-12).all() and (q <= self.limits_hi + 1e-12).all())


def joint_points(model: ArmModel, q) -> np.ndarray:
    """(n+1, 2) array: base followed by each link's distal end."""
    return joint_points_batch(model, np.asarray(q, dtype=float)[None, :])[0]


def joint_points_batch(model: ArmModel, Q: np.ndarray) -> np.ndarray:
    """(B, n+1, 2) joint positions for a batch of configurations."""
    ang = model.base_pose.phi + np.cumsum(Q, axis=1)  # (B, n)
    L = np.asarray(model.link_lengths)
    steps = np.stack([L * np.cos(ang), L * np.sin(ang)], axis=-1)  # (B, n, 2)
    pts = np.empty((Q.shape[0], model.n + 1, 2))
    pts[:, 0, 0] = model.base_pose.x
    pts[:, 0, 1] = model.base_pose.y
    pts[:, 1:, :] = np.cumsum(steps, axis=1) + pts[:, :1, :]
    return pts


def fk(model: ArmModel, q):
    """Forward kinematics: link capsules and the end-effector pose."""
    q = np.asarray(q, dtype=float)
    if q.shape != (model.n,):
        raise ValueError(f"expected {model.n} joint values")
    pts = joint_points(model, q)
    links = [
        Capsule(tuple(pts[i]), tuple(pts[i + 1]), model.link_radius)
        for i in range(model.n)
    ]
    phi = wrap_angle(model.base_pose.phi + float(q.sum()))
    return links, Pose2(float(pts[-1, 0]), float(pts[-1, 1]), phi)


def ee_pose(model: ArmModel, q) -> Pose2:
    q = np.asarray(q, dtype=float)
    pts = joint_points(model, q)
    return Pose2(float(pts[-1, 0]), float(pts[-1, 1]), wrap_angle(model.base_pose.phi + float(q.sum())))


def jacobian(model: ArmModel, q) -> np.ndarray:
    """3 x n task Jacobian d(x, y, phi)/dq for the end-effector."""
    q = np.asarray(q, dtype=float)
    pts = joint_points(model, q)
    ee = pts[-1]
    J = np.empty((3, model.n))
    J[0, :] = -(ee[1] - pts[:-1, 1])
    J[1, :] = ee[0] - pts[:-1, 0]
    J[2, :] = 1.0
    return J


def _jacobian_batch(model: ArmModel, Q: np.ndarray, pts: np.ndarray) -> np.ndarray:
    ee = pts[:, -1, :]  # (B, 2)
    J = np.empty((Q.shape[0], 3, model.n))
    J[:, 0, :] = -(ee[:, None, 1] - pts[:, :-1, 1])
    J[:, 1, :] = ee[:, None, 0] - pts[:, :-1, 0]
    J[:, 2, :] = 1.0
    return J


def ik(
    model: ArmModel,
    target: Pose2,
    seed,
    tol_pos: float = 1e-3,
    tol_phi: float = 1e-2,
    max_iters: int = 60,
    max_restarts: int = 50,
    rng: np.random.Generator | None = None,
    damping: float = 0.05,
    step_clamp: float = 0.3,
):
    """Damped-least-squares IK with random restarts.

    Returns a joint configuration within limits whose FK pose matches
    `target` within the tolerances, or None when every restart fails.
    Restart seeds are drawn up front, so the result is a pure function of
    the arguments and the rng state.
    """
    if tol_pos <= 0 or tol_phi <= 0:
        raise ValueError("tolerances must be > 0")
    seed = np.asarray(seed, dtype=float)

    # a target outside the reachable annulus can never converge
    dx = target.x - model.base_pose.x
    dy = target.y - model.base_pose.y
    r = math.hypot(dx, dy)
    L = np.asarray(model.link_lengths)
    r_min = max(0.0, 2.0 * L.max() - L.sum())
    if r > model.reach + tol_pos or r < r_min - tol_pos:
        return None

    lo, hi = model.limits_lo, model.limits_hi
    seeds = np.empty((max_restarts, model.n))
    seeds[0] = seed
    if max_restarts > 1:
        if rng is None:
            rng = np.random.default_rng(0)
        seeds[1:] = rng.uniform(lo, hi, size=(max_restarts - 1, model.n))

    found, q = dls_ik_core(
        seeds,
        target.x,
        target.y,
        target.phi,
        np.asarray(model.link_lengths, dtype=float),
        model.base_pose.x,
        model.base_pose.y,
        model.base_pose.phi,
        lo,
        hi,
        tol_pos,
        tol_phi,
        max_iters,
        damping,
        step_clamp,
    )
    return q if found else None
