"""Generation of the four experimental setups as planar scenes.

Every scene anchors the arm base at the world origin.  Obstacles never
enter the protected corridor (a 0.20 m wide band around the conveyor
path), so the object's own motion is always collision-free.  The household
and cluttered-household setups are planar adaptations: shelf geometry that
sits above the trajectory in 3-D becomes blocking geometry on the far side
of (or ringed around) the trajectory, preserving the reachable-region
structure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._fastcol import config_free, links_hit, pack_obstacles
from .arm import ArmModel
from .conveyor import TrajectoryParams, corridor_polyline, sample_params
from .geom2d import Capsule, Circle, OrientedRect, Pose2, wrap_angle
from .grasp import ObjectSpec, load_catalog

SETUP_KINDS = ("blocks_3_6", "blocks_7_9", "household", "cluttered_household")

CORRIDOR_HALF_WIDTH = 0.10  # m, half of the protected 20 cm band
BASE_CLEARANCE = 0.08  # m, keep obstacles off the arm base
OBSTACLE_NOISE_SIGMA = 0.010  # m, observation noise on poses and dims
OBSTACLE_NOISE_SIGMA_PHI = 0.02  # rad
DIM_FLOOR = 0.005  # m, observed dimensions never drop below this
MAX_REJECTION_ATTEMPTS = 10_000


class SceneGenerationError(RuntimeError):
    """Rejection sampling could not satisfy the scene constraints."""


@dataclass
class Scene:
    setup_kind: str
    trajectory: TrajectoryParams
    object_spec: ObjectSpec
    obstacles: list
    observed: list
    protected_corridor: list
    arm_init: np.ndarray
    packed: tuple = field(default=None, repr=False)  # cached obstacle arrays

    def __post_init__(self):
        if self.packed is None:
            self.packed = pack_obstacles(self.obstacles)


def object_shape_at(spec: ObjectSpec, pose: Pose2):
    """The object's footprint placed at a world pose."""
    fp = spec.footprint
    if isinstance(fp, Circle):
        return Circle((pose.x, pose.y), fp.radius)
    return OrientedRect(Pose2(pose.x, pose.y, pose.phi), fp.half_w, fp.half_h)


def _violates_corridor(shape, poly_pts: np.ndarray) -> bool:
    circs, rects = pack_obstacles([shape])
    return links_hit(poly_pts, CORRIDOR_HALF_WIDTH, circs, rects)


def _too_close_to_base(shape) -> bool:
    from .geom2d import point_shape_distance

    return point_shape_distance((0.0, 0.0), shape) < BASE_CLEARANCE


def _sample_blocks(rng, n_blocks, poly_pts):
    lo = poly_pts.min(axis=0) - 0.15
    hi = poly_pts.max(axis=0) + 0.15
    lo = np.minimum(lo, [-0.15, -0.15])
    hi = np.maximum(hi, [0.15, 0.15])
    obstacles = []
    for _ in range(n_blocks):
        for attempt in range(MAX_REJECTION_ATTEMPTS):
            c = rng.uniform(lo, hi)
            phi = rng.uniform(-math.pi, math.pi)
            half = rng.uniform(0.025, 0.075, size=2)
            rect = OrientedRect(Pose2(c[0], c[1], phi), half[0], half[1])
            if _violates_corridor(rect, poly_pts) or _too_close_to_base(rect):
                continue
            obstacles.append(rect)
            break
        else:
            raise SceneGenerationError("could not place a block outside the corridor")
    return obstacles


def _household_walls(rng, params: TrajectoryParams):
    u = np.array([math.cos(params.theta), math.sin(params.theta)])
    tangent = params.d * np.array([-u[1], u[0]])
    origin = params.r * u
    along = math.atan2(tangent[1], tangent[0])
    span = params.l / 2.0 + 0.3
    gap = rng.uniform(0.45, 0.85)
    back_off = rng.uniform(0.40, 0.60)
    side_off = 0.24
    thick = 0.02

    walls = []
    half_len = (span - gap / 2.0) / 2.0
    for sign in (-1.0, 1.0):
        center_t = sign * (gap / 2.0 + half_len)
        c = origin - side_off * u + center_t * tangent
        walls.append(OrientedRect(Pose2(c[0], c[1], along), half_len, thick))
    c = origin + back_off * u
    walls.append(OrientedRect(Pose2(c[0], c[1], along), span, thick))
    return walls


def _cluttered_obstacles(rng, params: TrajectoryParams):
    arc_span = params.d * params.l / params.r
    a0 = min(params.theta, params.theta + arc_span) - 0.3
    a1 = max(params.theta, params.theta + arc_span) + 0.3

    obstacles = []
    for _ in range(5):
        radius = rng.uniform(0.03, 0.06)
        inside = rng.random() < 0.5
        rho = params.r + (-1.0 if inside else 1.0) * (CORRIDOR_HALF_WIDTH + radius + 0.02)
        ang = rng.uniform(a0, a1)
        obstacles.append(Circle((rho * math.cos(ang), rho * math.sin(ang)), radius))

    # ring of 15 identical tangential rects in 19 slots; 4 near-even gaps
    r_ring = params.r + 0.14
    thick = 0.015
    slot = 2.0 * math.pi / 19.0
    half_len = r_ring * slot / 2.0 * 0.92
    rot = rng.uniform(0.0, 2.0 * math.pi)
    gaps = {0, 5, 10, 15}
    for k in range(19):
        if k in gaps:
            continue
        beta = rot + k * slot
        c = np.array([r_ring * math.cos(beta), r_ring * math.sin(beta)])
        obstacles.append(OrientedRect(Pose2(c[0], c[1], wrap_angle(beta + math.pi / 2.0)), half_len, thick))
    return obstacles


def observed_obstacles(obstacles, rng: np.random.Generator):
    """Noisy copies of the obstacle list for featurization only."""
    out = []
    for ob in obstacles:
        if isinstance(ob, Circle):
            cx = ob.center[0] + rng.normal(0.0, OBSTACLE_NOISE_SIGMA)
            cy = ob.center[1] + rng.normal(0.0, OBSTACLE_NOISE_SIGMA)
            r = max(DIM_FLOOR, ob.radius + rng.normal(0.0, OBSTACLE_NOISE_SIGMA))
            out.append(Circle((cx, cy), r))
        elif isinstance(ob, OrientedRect):
            cx = ob.pose.x + rng.normal(0.0, OBSTACLE_NOISE_SIGMA)
            cy = ob.pose.y + rng.normal(0.0, OBSTACLE_NOISE_SIGMA)
            phi = ob.pose.phi + rng.normal(0.0, OBSTACLE_NOISE_SIGMA_PHI)
            hw = max(DIM_FLOOR, ob.half_w + rng.normal(0.0, OBSTACLE_NOISE_SIGMA))
            hh = max(DIM_FLOOR, ob.half_h + rng.normal(0.0, OBSTACLE_NOISE_SIGMA))
            out.append(OrientedRect(Pose2(cx, cy, phi), hw, hh))
        else:
            raise TypeError(f"cannot observe obstacle {type(ob)}")
    return out


def make_scene(
    kind: str,
    rng: np.random.Generator,
    model: ArmModel | None = None,
    n_obstacles: int | None = None,
    noise_free_observation: bool = False,
) -> Scene:
    """Sample one scene.  Draw order is fixed, so a seed pins the scene.

    n_obstacles overrides the block count for the blocks setups (used by
    the obstacle-count sweep).
    """
    if kind not in SETUP_KINDS:
        raise ValueError(f"unknown setup kind {kind!r}")
    if model is None:
        model = ArmModel()
    catalog = load_catalog()

    if kind == "household":
        family = ("linear", "sinusoidal", "rectangular")[rng.integers(3)]
    elif kind == "cluttered_household":
        family = "circular"
    else:
        family = ("linear", "sinusoidal", "rectangular", "circular")[rng.integers(4)]
    params = sample_params(family, rng)
    spec = catalog[rng.integers(len(catalog))]

    poly = corridor_polyline(params)
    if kind in ("blocks_3_6", "blocks_7_9"):
        if n_obstacles is None:
            n_blocks = int(rng.integers(3, 7)) if kind == "blocks_3_6" else int(rng.integers(7, 10))
        else:
            n_blocks = int(n_obstacles)
        obstacles = _sample_blocks(rng, n_blocks, poly)
    elif kind == "household":
        obstacles = _household_walls(rng, params)
    else:
        obstacles = _cluttered_obstacles(rng, params)

    observed = obstacles if noise_free_observation else observed_obstacles(obstacles, rng)

    corridor = [
        Capsule(tuple(poly[i]), tuple(poly[i + 1]), CORRIDOR_HALF_WIDTH)
        for i in range(len(poly) - 1)
    ]

    packed = pack_obstacles(obstacles)
    lengths = np.asarray(model.link_lengths, dtype=float)
    from .conveyor import pose_at

    start_shape = object_shape_at(spec, pose_at(params, 0.0))
    circs_o, rects_o = pack_obstacles([start_shape])
    circs = np.concatenate([packed[0], circs_o])
    rects = np.concatenate([packed[1], rects_o])
    for _ in range(MAX_REJECTION_ATTEMPTS):
        q = rng.uniform(model.limits_lo, model.limits_hi)
        if config_free(
            q, lengths, model.base_pose.x, model.base_pose.y, model.base_pose.phi,
            model.link_radius, circs, rects,
        ):
            arm_init = q
            break
    else:
        raise SceneGenerationError("no collision-free initial arm configuration found")

    return Scene(kind, params, spec, obstacles, observed, corridor, arm_init, packed)


# --- serialization -----------------------------------------------------------


def _r(x) -> str:
    return repr(float(x))


def _shape_line(tag, shape) -> str:
    if isinstance(shape, Circle):
        return f"{tag} circle {_r(shape.center[0])} {_r(shape.center[1])} {_r(shape.radius)}"
    if isinstance(shape, OrientedRect):
        p = shape.pose
        return f"{tag} rect {_r(p.x)} {_r(p.y)} {_r(p.phi)} {_r(shape.half_w)} {_r(shape.half_h)}"
    raise TypeError(type(shape))


def _parse_shape(parts):
    if parts[0] == "circle":
        return Circle((float(parts[1]), float(parts[2])), float(parts[3]))
    if parts[0] == "rect":
        return OrientedRect(
            Pose2(float(parts[1]), float(parts[2]), float(parts[3])),
            float(parts[4]),
            float(parts[5]),
        )
    raise ValueError(f"unknown shape tag {parts[0]!r}")


def scene_to_text(scene: Scene) -> str:
    t = scene.trajectory
    lines = [
        "scene 1",
        f"setup {scene.setup_kind}",
        f"trajectory {t.family} {_r(t.theta)} {_r(t.r)} {_r(t.l)} {t.d} {_r(t.v)} {_r(t.amp)} {_r(t.period)}",
        f"object {scene.object_spec.shape_id}",
        "arm_init " + " ".join(_r(v) for v in scene.arm_init),
    ]
    lines += [_shape_line("obstacle", ob) for ob in scene.obstacles]
    lines += [_shape_line("observed", ob) for ob in scene.observed]
    lines.append("end")
    return "\n".join(lines) + "\n"


def scene_from_text(text: str) -> Scene:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if lines[0] != "scene 1" or lines[-1] != "end":
        raise ValueError("malformed scene record")
    kind = None
    params = None
    spec = None
    arm_init = None
    obstacles = []
    observed = []
    for ln in lines[1:-1]:
        parts = ln.split()
        if parts[0] == "setup":
            kind = parts[1]
        elif parts[0] == "trajectory":
            params = TrajectoryParams(
                parts[1], float(parts[2]), float(parts[3]), float(parts[4]),
                int(parts[5]), float(parts[6]), float(parts[7]), float(parts[8]),
            )
        elif parts[0] == "object":
            spec = next(o for o in load_catalog() if o.shape_id == parts[1])
        elif parts[0] == "arm_init":
            arm_init = np.array([float(v) for v in parts[1:]])
        elif parts[0] == "obstacle":
            obstacles.append(_parse_shape(parts[1:]))
        elif parts[0] == "observed":
            observed.append(_parse_shape(parts[1:]))
        else:
            raise ValueError(f"unknown scene line {ln!r}")
    if kind is None or params is None or spec is None or arm_init is None:
        raise ValueError("incomplete scene record")
    poly = corridor_polyline(params)
    corridor = [
        Capsule(tuple(poly[i]), tuple(poly[i + 1]), CORRIDOR_HALF_WIDTH)
        for i in range(len(poly) - 1)
    ]
    return Scene(kind, params, spec, obstacles, observed, corridor, arm_init)
