"""Per-object grasp sets and the grasp-selection step of the pipeline.

Each object carries five pre-generated grasps: standoff poses just outside
the footprint whose approach rays point at the footprint center.  The five
approach angles are spread 72 degrees apart, which satisfies the 60-degree
diversity requirement for any footprint.  Grasp selection first retries
the previous iteration's grasp and otherwise walks the remaining grasps in
order of distance to the end-effector, charging c_ik virtual seconds per
IK attempt.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import arm as _arm
from ._fastcol import config_free
from .geom2d import Circle, OrientedRect, Pose2

STANDOFF = 0.07  # m between grasp point and footprint boundary
PLAN_MARGIN = 0.03  # m object-footprint inflation during planning (< STANDOFF)
GRASP_COUNT = 5


@dataclass(frozen=True)
class ObjectSpec:
    shape_id: str
    footprint: object  # Circle or OrientedRect in the object frame
    dims: tuple  # (d_x, d_y) full extents

    def __post_init__(self):
        for d in self.dims:
            if not 0.04 <= d <= 0.12:
                raise ValueError(f"{self.shape_id}: dims must lie in [0.04, 0.12] m")


@dataclass(frozen=True)
class GraspSet:
    grasps: tuple  # exactly 5 Pose2 in the object frame; phi = approach angle

    def __post_init__(self):
        if len(self.grasps) != GRASP_COUNT:
            raise ValueError("a grasp set holds exactly 5 grasps")


@dataclass
class GraspPlanOutcome:
    grasp_index: int
    world_grasp_pose: Pose2 | None
    ik_config: np.ndarray | None
    elapsed: float
    success: bool


def load_catalog():
    """The 7-entry object catalog shipped with the package."""
    text = resources.files("dynagrasp").joinpath("data/objects.txt").read_text()
    out = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        shape_id, kind, dx, dy = line.split()
        dx, dy = float(dx), float(dy)
        if kind == "circle":
            footprint = Circle((0.0, 0.0), dx / 2.0)
        elif kind == "rect":
            footprint = OrientedRect(Pose2(0.0, 0.0, 0.0), dx / 2.0, dy / 2.0)
        else:
            raise ValueError(f"unknown footprint kind {kind!r}")
        out.append(ObjectSpec(shape_id, footprint, (dx, dy)))
    if len(out) != 7:
        raise ValueError(f"catalog must hold 7 objects, found {len(out)}")
    return out


def _boundary_reach(spec: ObjectSpec, ux: float, uy: float) -> float:
    """Distance from the footprint center to its boundary along -u."""
    fp = spec.footprint
    if isinstance(fp, Circle):
        return fp.radius
    hw, hh = fp.half_w, fp.half_h
    hx = hw / abs(ux) if ux != 0.0 else math.inf
    hy = hh / abs(uy) if uy != 0.0 else math.inf
    return min(hx, hy)


def pregenerate_grasps(spec: ObjectSpec) -> GraspSet:
    """Five standoff grasps with approach angles 72 degrees apart.

    Deterministic per object: approach angle k points from the grasp point
    toward the footprint center, entering the boundary on the way.
    """
    grasps = []
    for k in range(GRASP_COUNT):
        alpha = 2.0 * math.pi * k / GRASP_COUNT
        ux, uy = math.cos(alpha), math.sin(alpha)
        h = _boundary_reach(spec, ux, uy) + STANDOFF
        grasps.append(Pose2(-h * ux, -h * uy, alpha))
    return GraspSet(tuple(grasps))


def world_grasps(obj_pose: Pose2, grasp_set: GraspSet):
    """Grasp poses composed onto an object pose."""
    return [obj_pose.compose(g) for g in grasp_set.grasps]


def plan_grasp(
    prev: GraspPlanOutcome | None,
    grasp_set: GraspSet,
    predicted_obj_pose: Pose2,
    q_current,
    model: _arm.ArmModel,
    packed_obstacles,
    c_ik: float,
    rng: np.random.Generator,
    ik_restarts: int = 12,
    ik_iters: int = 40,
) -> GraspPlanOutcome:
    """Pick a grasp at the predicted pose, preferring the previous one.

    An IK attempt succeeds when a within-limits, collision-free
    configuration reaches the world grasp pose.  elapsed is exactly
    c_ik times the number of attempts made.
    """
    q_current = np.asarray(q_current, dtype=float)
    poses = world_grasps(predicted_obj_pose, grasp_set)
    ee = _arm.ee_pose(model, q_current)
    circs, rects = packed_obstacles
    lengths = np.asarray(model.link_lengths, dtype=float)

    attempts = 0

    def attempt(idx: int):
        nonlocal attempts
        attempts += 1
        q = _arm.ik(
            model,
            poses[idx],
            seed=q_current,
            max_restarts=ik_restarts,
            max_iters=ik_iters,
            rng=rng,
        )
        if q is None:
            return None
        if not config_free(
            q, lengths, model.base_pose.x, model.base_pose.y, model.base_pose.phi,
            model.link_radius, circs, rects,
        ):
            return None
        return q

    order = []
    if prev is not None and prev.success:
        order.append(prev.grasp_index)
    ranked = sorted(
        (i for i in range(GRASP_COUNT) if i not in order),
        key=lambda i: (math.hypot(poses[i].x - ee.x, poses[i].y - ee.y), i),
    )
    order.extend(ranked)

    for idx in order:
        q = attempt(idx)
        if q is not None:
            return GraspPlanOutcome(idx, poses[idx], q, attempts * c_ik, True)
    return GraspPlanOutcome(-1, None, None, attempts * c_ik, False)
