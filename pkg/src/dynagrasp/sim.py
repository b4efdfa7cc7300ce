"""Dynamic-grasping episode engine under a deterministic virtual clock.

One iteration: sense (16 Hz noisy pushes), query the meta-policy, predict
the object pose at the look-ahead time, plan a grasp, plan a motion under
the time budget, then advance the world by everything charged (the arm
holds still while "computing") and execute a slice of the planned path.
The world is sampled at 60 Hz throughout, so the moving object can trigger
a grasp against a parked end-effector, knock into it, or reach the end of
its trajectory at any point of the virtual timeline.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ._fastcol import (
    EV_COLLISION,
    EV_KNOCKED,
    EV_NONE,
    EV_TRIGGER,
    config_free,
    fk_batch_pts,
    links_hit,
    pack_obstacles,
    scan_events,
)
from .arm import ArmModel, ee_pose, jacobian
from .conveyor import ObsNoise, observe, pose_at, pose_at_batch
from .geom2d import Circle, OrientedRect, Pose2, collide, wrap_angle
from .grasp import plan_grasp, pregenerate_grasps
from .meta import (
    ACTION_HI,
    ACTION_LO,
    IterationContext,
    MetaAction,
    PrevActions,
    featurize,
    stack_frames,
)
from .planner import CostModel, birrt_plan, retime, sample_state_at
from .predictor import HistoryBuffer, predict
from .scenes import Scene, object_shape_at

logger = logging.getLogger(__name__)

CHECK_RATE = 60.0  # Hz, world sampling during any time advance
_DT = 1.0 / CHECK_RATE
_EV_END = 4
SWEEP_HORIZON = 1.25  # s of object travel blocked out during planning
# once the end-effector has reached its planned grasp pose, the loop stops
# retargeting and waits for the object until the look-ahead time (plus a
# little slack) has elapsed; the hold is abandoned early when the observed
# object closes in clearly off-target
HOLD_POS = 0.025  # m
HOLD_PHI = 0.15  # rad
HOLD_SLACK = 0.75  # s
HOLD_MAX = 3.0  # s cap on a single wait
HOLD_CHUNK = 0.25  # s between hold abort checks
HOLD_ABORT_BODY = 0.04  # m observed-body proximity that aborts the hold
HOLD_ABORT_GRASP = 0.033  # m unless a grasp point is this close (imminent catch)
# reflex pull-away executed when extrapolated object motion reaches the arm
# before any grasp point reaches the end-effector
GIVE_WAY_CLEAR = 0.12  # m
GIVE_WAY_TIME = 0.6  # s cap
GIVE_WAY_SPEED = 0.4  # m/s end-effector retreat speed
REFLEX_WINDOW = 3.0  # s of constant-velocity extrapolation
REFLEX_STEP = 1.0 / 30.0

TERMINATIONS = ("grasped", "collision", "knocked_over", "end_of_trajectory")


@dataclass(frozen=True)
class EpisodeConfig:
    exec_slice: float = 0.4
    grasp_trigger_pos: float = 0.03
    grasp_trigger_phi: float = 0.26
    retreat_dist: float = 0.05
    retreat_speed: float = 0.25  # m/s end-effector speed while lifting away
    noise: ObsNoise = field(default_factory=ObsNoise)
    cost: CostModel = field(default_factory=CostModel)
    ik_restarts: int = 12
    ik_iters: int = 40

    def __post_init__(self):
        if min(self.exec_slice, self.grasp_trigger_pos, self.grasp_trigger_phi,
               self.retreat_dist, self.retreat_speed) <= 0:
            raise ValueError("episode config values must be positive")


@dataclass
class IterationRecord:
    index: int
    t_start: float
    action: MetaAction
    policy_time: float
    predicted_pose: Pose2
    gp_success: bool
    gp_index: int
    gp_pose: Pose2 | None
    gp_time: float
    gp_ik: np.ndarray | None
    gp_dist_to_ik: float
    mp_attempted: bool
    mp_success: bool
    mp_time: float
    exec_time: float
    t_end: float


@dataclass
class EpisodeResult:
    success: bool
    grasping_time: float
    termination: str
    trace: list
    final_time: float
    charges: dict


class _Episode:
    """Mutable state of one running episode."""

    def __init__(self, scene, policy, predictor_model, config, rng_episode, rng_policy, model):
        self.scene = scene
        self.policy = policy
        self.predictor_model = predictor_model
        self.config = config
        self.rng_episode = rng_episode
        self.rng_policy = rng_policy
        self.model = model

        self.traj = scene.trajectory
        self.duration = self.traj.duration
        self.circs, self.rects = scene.packed
        self.lengths = np.asarray(model.link_lengths, dtype=float)
        self.base = (model.base_pose.x, model.base_pose.y, model.base_pose.phi)

        self.grasp_set = pregenerate_grasps(scene.object_spec)
        self.grasp_offsets = np.array([(g.x, g.y, g.phi) for g in self.grasp_set.grasps])
        fp = scene.object_spec.footprint
        if isinstance(fp, Circle):
            self.fp = (0, fp.radius, 0.0)
        else:
            self.fp = (1, fp.half_w, fp.half_h)

        noise = config.noise
        self.dims_obs = tuple(
            max(0.005, d + (rng_episode.normal(0.0, noise.sigma_pos) if noise.sigma_pos > 0 else 0.0))
            for d in scene.object_spec.dims
        )

        self.q = scene.arm_init.copy()
        self.buf = HistoryBuffer()
        self.t = 0.0
        self.advanced = {"compute": 0.0, "exec": 0.0}
        self.charges = {"policy": 0.0, "prediction": 0.0, "grasp_ik": 0.0, "planning": 0.0}
        self.next_grid = 0
        self.frames = []
        self.prev = PrevActions()
        self.prev_gp = None
        self.predicted_prev = None
        self.trace = []
        self.phase = "init"

    # --- world helpers -------------------------------------------------------

    def sense(self):
        while self.next_grid / 16.0 <= self.t + 1e-12:
            g = self.next_grid / 16.0
            self.buf.push(observe(pose_at(self.traj, g), self.config.noise, self.rng_episode), g)
            self.next_grid += 1

    def _step_times(self, dt: float) -> np.ndarray:
        if dt <= 1e-15:
            return np.empty(0)
        full = int(math.floor(dt * CHECK_RATE + 1e-12))
        times = self.t + _DT * np.arange(1, full + 1)
        rem = dt - full * _DT
        if rem > 1e-12 or full == 0:
            times = np.append(times, self.t + dt)
        return times

    def advance(self, dt: float, kind: str, timed_path=None):
        """Advance the clock by dt at 60 Hz; returns (event_code, grasp_idx).

        kind is "compute" (arm holds) or "exec" (arm tracks timed_path from
        its start).  On an event the clock stops at the event sample and,
        while executing, the arm is left at the matching path state.
        """
        times = self._step_times(dt)
        if len(times) == 0:
            return EV_NONE, -1
        t0 = self.t
        obj = pose_at_batch(self.traj, times)
        if timed_path is None:
            pts1 = np.empty((1, self.model.n + 1, 2))
            fk_batch_pts(self.q[None, :], self.lengths, *self.base, pts1)
            pts = np.repeat(pts1, len(times), axis=0)
            phis = np.full(len(times), wrap_angle(self.base[2] + float(self.q.sum())))
            check_obstacles = False
        else:
            Q = np.stack([sample_state_at(timed_path, tt - t0) for tt in times])
            pts = np.empty((len(times), self.model.n + 1, 2))
            fk_batch_pts(Q, self.lengths, *self.base, pts)
            phis = np.mod(self.base[2] + Q.sum(axis=1) + math.pi, 2 * math.pi) - math.pi
            check_obstacles = True
        code, k, g_idx = scan_events(
            pts, phis, obj, self.grasp_offsets, self.fp[0], self.fp[1], self.fp[2],
            self.model.link_radius, self.config.grasp_trigger_pos, self.config.grasp_trigger_phi,
            self.circs, self.rects, check_obstacles,
        )
        k_end = int(np.searchsorted(times, self.duration - 1e-12, side="left"))
        if code != EV_NONE and k <= k_end:
            k_stop, out = k, (code, g_idx)
        elif k_end < len(times):
            k_stop, out = k_end, (_EV_END, -1)
        else:
            k_stop, out = len(times) - 1, (EV_NONE, -1)
        used = float(times[k_stop]) - self.t
        self.t = float(times[k_stop])
        self.advanced[kind] += used
        if timed_path is not None:
            self.q = sample_state_at(timed_path, self.t - t0)
        return out

    # --- retreat (the planar stand-in for lifting the object) -----------------

    def retreat(self, grasp_idx: int):
        """Straight-line pull-back with the object attached; returns result."""
        self.phase = "retreat"
        cfg = self.config
        model = self.model
        obj_pose = pose_at(self.traj, self.t)
        g = self.grasp_set.grasps[grasp_idx]
        gw_phi = wrap_angle(obj_pose.phi + g.phi)
        direction = np.array([-math.cos(gw_phi), -math.sin(gw_phi)])

        ee0 = ee_pose(model, self.q)
        # attach transform: object pose in the end-effector frame
        c, s = math.cos(ee0.phi), math.sin(ee0.phi)
        dx, dy = obj_pose.x - ee0.x, obj_pose.y - ee0.y
        rel = (c * dx + s * dy, -s * dx + c * dy, wrap_angle(obj_pose.phi - ee0.phi))

        lam2 = 0.05 * 0.05
        step_needed = cfg.retreat_dist / (cfg.retreat_speed * _DT)
        max_ticks = int(3 * math.ceil(step_needed)) + 3
        obstacles = self.scene.obstacles
        for _ in range(max_ticks):
            J = jacobian(model, self.q)[:2]
            A = J @ J.T
            A[0, 0] += lam2
            A[1, 1] += lam2
            dx_target = direction * cfg.retreat_speed * _DT
            y = np.linalg.solve(A, dx_target)
            dq = np.clip(J.T @ y, -model.max_joint_speed * _DT, model.max_joint_speed * _DT)
            self.q = np.clip(self.q + dq, model.limits_lo, model.limits_hi)
            self.t += _DT
            self.advanced["exec"] += _DT
            ee = ee_pose(model, self.q)
            pts = np.empty((1, model.n + 1, 2))
            fk_batch_pts(self.q[None, :], self.lengths, *self.base, pts)
            if links_hit(pts[0], model.link_radius, self.circs, self.rects):
                return self._finish(False, "collision")
            cc, ss = math.cos(ee.phi), math.sin(ee.phi)
            carried = Pose2(
                ee.x + cc * rel[0] - ss * rel[1],
                ee.y + ss * rel[0] + cc * rel[1],
                wrap_angle(ee.phi + rel[2]),
            )
            carried_shape = object_shape_at(self.scene.object_spec, carried)
            if any(collide(carried_shape, ob) for ob in obstacles):
                return self._finish(False, "collision")
            moved = (ee.x - ee0.x) * direction[0] + (ee.y - ee0.y) * direction[1]
            if moved >= cfg.retreat_dist:
                return self._finish(True, "grasped")
        return self._finish(False, "collision")  # lift stalled (near-singular arm)

    def _lookahead_event(self):
        """First event if the object keeps its observed velocity and the arm
        holds still: one of the scan_events codes, from extrapolated poses.
        """
        obs = self.buf.last_world_pose
        if obs is None:
            return EV_NONE
        vx, vy, om = self.buf.velocity_estimate()
        taus = np.arange(REFLEX_STEP, REFLEX_WINDOW + 1e-9, REFLEX_STEP)
        obj = np.empty((len(taus), 3))
        if abs(om) < 1e-6:
            obj[:, 0] = obs.x + vx * taus
            obj[:, 1] = obs.y + vy * taus
        else:
            a = om * taus
            sa, ca = np.sin(a), 1.0 - np.cos(a)
            obj[:, 0] = obs.x + (sa * vx - ca * vy) / om
            obj[:, 1] = obs.y + (ca * vx + sa * vy) / om
        obj[:, 2] = obs.phi + om * taus
        pts1 = np.empty((1, self.model.n + 1, 2))
        fk_batch_pts(self.q[None, :], self.lengths, *self.base, pts1)
        pts = np.repeat(pts1, len(taus), axis=0)
        phis = np.full(len(taus), wrap_angle(self.base[2] + float(self.q.sum())))
        code, _, _ = scan_events(
            pts, phis, obj, self.grasp_offsets, self.fp[0], self.fp[1], self.fp[2],
            self.model.link_radius, self.config.grasp_trigger_pos, self.config.grasp_trigger_phi,
            self.circs, self.rects, False,
        )
        return code

    def _arm_body_distance(self, body) -> float:
        """Minimum clearance between any arm link capsule and a shape."""
        from .geom2d import Capsule, distance

        pts = np.empty((self.model.n + 1, 2))
        from ._fastcol import fk_pts

        fk_pts(self.q, self.lengths, *self.base, pts)
        return min(
            distance(Capsule(tuple(pts[i]), tuple(pts[i + 1]), self.model.link_radius), body)
            for i in range(self.model.n)
        )

    def give_way(self):
        """Reflex pull-away from the observed object while it passes.

        Moves the end-effector away from the body at 60 Hz with full event
        checking until clear, blocked, or timed out.  Returns a result on a
        terminal event, else None.
        """
        model = self.model
        lam2 = 0.05 * 0.05
        ticks = int(GIVE_WAY_TIME * CHECK_RATE)
        for _ in range(ticks):
            obs = self.buf.last_world_pose
            body = object_shape_at(self.scene.object_spec, obs)
            ee = ee_pose(model, self.q)
            d_body = self._arm_body_distance(body)
            if d_body >= GIVE_WAY_CLEAR or self._lookahead_event() == EV_NONE:
                return None
            away = np.array([ee.x - obs.x, ee.y - obs.y])
            norm = math.hypot(*away)
            if norm < 1e-9:
                away = np.array([1.0, 0.0])
                norm = 1.0
            away /= norm
            J = jacobian(model, self.q)[:2]
            A = J @ J.T
            A[0, 0] += lam2
            A[1, 1] += lam2
            y = np.linalg.solve(A, away * GIVE_WAY_SPEED * _DT)
            dq = np.clip(J.T @ y, -model.max_joint_speed * _DT, model.max_joint_speed * _DT)
            q_next = np.clip(self.q + dq, model.limits_lo, model.limits_hi)
            pts = np.empty((1, model.n + 1, 2))
            fk_batch_pts(q_next[None, :], self.lengths, *self.base, pts)
            if links_hit(pts[0], model.link_radius, self.circs, self.rects):
                q_next = self.q  # blocked by scene geometry: stay put
            self.q = q_next
            code, g_idx = self.advance(_DT, "exec")
            done = self._handle(code, g_idx)
            if done is not None:
                return done
            self.sense()
        return None

    def _finish(self, success: bool, termination: str) -> EpisodeResult:
        return EpisodeResult(
            success=success,
            grasping_time=self.t,
            termination=termination,
            trace=self.trace,
            final_time=self.t,
            charges={**self.charges, **self.advanced, "phase": self.phase},
        )

    def _handle(self, code: int, g_idx: int):
        if code == EV_NONE:
            return None
        if code == EV_TRIGGER:
            return self.retreat(g_idx)
        if code == EV_KNOCKED:
            return self._finish(False, "knocked_over")
        if code == EV_COLLISION:
            return self._finish(False, "collision")
        return self._finish(False, "end_of_trajectory")

    def _planning_obstacles(self):
        """Scene obstacles plus the object's observed footprint, swept ahead.

        Grasp-IK validity and motion planning treat the object body as an
        obstacle at its estimated pose: configurations reaching into the
        object are useless, and filtering them steers grasp selection to
        the approachable side of the moving object.  The footprint is
        inflated below the grasp standoff to absorb estimation noise and
        swept a short execution horizon along the estimated velocity so
        freshly planned motion does not collide with the object's next few
        centimeters of travel.
        """
        from .grasp import PLAN_MARGIN

        obs_pose = self.buf.last_world_pose
        fp = self.scene.object_spec.footprint
        vx, vy, _ = self.buf.velocity_estimate()
        speed = math.hypot(vx, vy)
        sweep = speed * SWEEP_HORIZON
        if isinstance(fp, Circle):
            half_w, half_h = fp.radius, fp.radius
        else:
            half_w, half_h = fp.half_w, fp.half_h
        if sweep > 1e-6:
            # objects travel along their heading, so the footprint's x-extent
            # faces the motion; sweep it forward by the execution horizon
            heading = math.atan2(vy, vx)
            cx = obs_pose.x + 0.5 * sweep * math.cos(heading)
            cy = obs_pose.y + 0.5 * sweep * math.sin(heading)
            shape = OrientedRect(
                Pose2(cx, cy, heading),
                0.5 * sweep + half_w + PLAN_MARGIN,
                half_h + PLAN_MARGIN,
            )
        elif isinstance(fp, Circle):
            shape = Circle((obs_pose.x, obs_pose.y), half_w + PLAN_MARGIN)
        else:
            shape = OrientedRect(
                Pose2(obs_pose.x, obs_pose.y, obs_pose.phi),
                half_w + PLAN_MARGIN, half_h + PLAN_MARGIN,
            )
        oc, orect = pack_obstacles([shape])
        circs = np.concatenate([self.circs, oc]) if len(oc) else self.circs
        rects = np.concatenate([self.rects, orect]) if len(orect) else self.rects
        return circs, rects

    # --- main loop -------------------------------------------------------------

    def run(self, max_iterations: int) -> EpisodeResult:
        cfg = self.config
        cost = cfg.cost
        model = self.model
        for it in range(max_iterations):
            if self.t >= self.duration - 1e-12:
                return self._finish(False, "end_of_trajectory")
            t_start = self.t
            self.sense()

            # reflex evasion: never start a compute phase parked in the
            # object's way; staying is fine when the extrapolated motion
            # reaches a grasp trigger before any contact
            ee = ee_pose(model, self.q)
            if self._lookahead_event() in (EV_KNOCKED, EV_COLLISION):
                self.phase = "give_way"
                done = self.give_way()
                if done is not None:
                    return done
                ee = ee_pose(model, self.q)
            planning_packed = self._planning_obstacles()
            ctx = IterationContext(
                q=self.q,
                ee=ee,
                buffer=self.buf,
                obs_pose=self.buf.last_world_pose,
                obj_dims=self.dims_obs,
                observed_obstacles=self.scene.observed,
                prev=self.prev,
                predicted_prev=self.predicted_prev,
                model=model,
                predictor=self.predictor_model,
                packed_obstacles=planning_packed,
                cost=cost,
                rng=self.rng_policy,
                obj_spec=self.scene.object_spec,
            )
            frame = featurize(ctx)
            self.frames.append(frame)
            ctx.stacked = stack_frames(self.frames, model.n)

            action, policy_time = self.policy.decide(ctx)
            tl, tt = action.T_L, action.T_T
            if not (ACTION_LO[0] <= tl <= ACTION_HI[0]) or not (ACTION_LO[1] <= tt <= ACTION_HI[1]):
                logger.warning("policy action (%.3f, %.3f) outside bounds; clamping", tl, tt)
                tl = float(np.clip(tl, ACTION_LO[0], ACTION_HI[0]))
                tt = float(np.clip(tt, ACTION_LO[1], ACTION_HI[1]))
                action = MetaAction(tl, tt)
            self.charges["policy"] += policy_time

            predicted = predict(self.predictor_model, self.buf, tl)
            self.charges["prediction"] += cost.c_pred

            gp = plan_grasp(
                self.prev_gp, self.grasp_set, predicted, self.q, model, planning_packed,
                cost.c_ik, self.rng_episode, ik_restarts=cfg.ik_restarts, ik_iters=cfg.ik_iters,
            )
            self.charges["grasp_ik"] += gp.elapsed

            plan = None
            if gp.success:
                # the observed object pose is noisy, so the parked arm may
                # appear in contact; planning is skipped for that iteration
                start_free = config_free(
                    self.q, self.lengths, *self.base, model.link_radius, *planning_packed
                )
                if start_free:
                    plan = birrt_plan(
                        model, None, self.q, gp.ik_config, tt, cost, self.rng_episode,
                        packed=planning_packed,
                    )
                    self.charges["planning"] += plan.elapsed

            compute = policy_time + cost.c_pred + gp.elapsed + (plan.elapsed if plan else 0.0)
            self.phase = "compute"
            code, g_idx = self.advance(compute, "compute")
            done = self._handle(code, g_idx)

            exec_time = 0.0
            if done is None and plan is not None and plan.success:
                timed = retime(plan.path, model.max_joint_speed)
                exec_time = min(cfg.exec_slice, timed.duration)
                if exec_time > 0.0:
                    self.phase = "transit"
                    code, g_idx = self.advance(exec_time, "exec", timed_path=timed)
                    done = self._handle(code, g_idx)
                else:
                    self.q = timed.configs[-1].copy()

            # end-effector at the planned grasp: hold and let the object
            # arrive instead of chasing a pose that stays T_L ahead; give
            # way if the object closes in visibly off-target
            if done is None and gp.success:
                ee_now = ee_pose(model, self.q)
                gpp = gp.world_grasp_pose
                close = (
                    math.hypot(ee_now.x - gpp.x, ee_now.y - gpp.y) <= HOLD_POS
                    and abs(wrap_angle(ee_now.phi - gpp.phi)) <= HOLD_PHI
                )
                arrival = min(t_start + tl + HOLD_SLACK, self.t + HOLD_MAX)
                while done is None and close and arrival > self.t:
                    chunk = min(HOLD_CHUNK, arrival - self.t)
                    self.phase = "hold"
                    code, g_idx = self.advance(chunk, "exec")
                    done = self._handle(code, g_idx)
                    if done is not None:
                        break
                    self.sense()
                    if self._lookahead_event() in (EV_KNOCKED, EV_COLLISION):
                        break  # the wait would end in contact: give way instead

            gp_dist = float(np.linalg.norm(self.q - gp.ik_config)) if gp.success else 0.0
            self.trace.append(
                IterationRecord(
                    index=it,
                    t_start=t_start,
                    action=action,
                    policy_time=policy_time,
                    predicted_pose=predicted,
                    gp_success=gp.success,
                    gp_index=gp.grasp_index,
                    gp_pose=gp.world_grasp_pose,
                    gp_time=gp.elapsed,
                    gp_ik=gp.ik_config,
                    gp_dist_to_ik=gp_dist,
                    mp_attempted=plan is not None,
                    mp_success=bool(plan.success) if plan else False,
                    mp_time=plan.elapsed if plan else 0.0,
                    exec_time=exec_time,
                    t_end=self.t,
                )
            )
            if done is not None:
                return done

            self.prev = PrevActions(
                T_L=tl,
                T_T=tt,
                mp_success=1.0 if (plan and plan.success) else 0.0,
                mp_time=plan.elapsed if plan else 0.0,
                gp_success=1.0 if gp.success else 0.0,
                grasp_pose=(gp.world_grasp_pose.x, gp.world_grasp_pose.y, gp.world_grasp_pose.phi)
                if gp.world_grasp_pose
                else (0.0, 0.0, 0.0),
                gp_time=gp.elapsed,
                ik_config=gp.ik_config,
                dist_to_ik=gp_dist,
            )
            self.prev_gp = gp if gp.success else None
            self.predicted_prev = predicted
        raise RuntimeError("episode exceeded max_iterations; check virtual-time charging")


def run_episode(
    scene: Scene,
    policy,
    predictor_model,
    config: EpisodeConfig,
    rng_episode: np.random.Generator,
    rng_policy: np.random.Generator,
    model: ArmModel | None = None,
    max_iterations: int = 100_000,
) -> EpisodeResult:
    """Run one dynamic-grasping episode to termination."""
    if model is None:
        model = ArmModel()
    if hasattr(policy, "begin_episode"):
        policy.begin_episode()
    ep = _Episode(scene, policy, predictor_model, config, rng_episode, rng_policy, model)
    return ep.run(max_iterations)


# --- evaluation -----------------------------------------------------------------


def episode_seeds(master_seed: int, index: int):
    """Named per-episode rng streams derived from the master seed."""
    scene_rng = np.random.default_rng(np.random.SeedSequence([master_seed, index, 0]))
    episode_rng = np.random.default_rng(np.random.SeedSequence([master_seed, index, 1]))
    policy_rng = np.random.default_rng(np.random.SeedSequence([master_seed, index, 2]))
    return scene_rng, episode_rng, policy_rng


def run_indexed_episode(
    setup_kind: str,
    index: int,
    master_seed: int,
    policy,
    predictor_model,
    config: EpisodeConfig,
    model: ArmModel | None = None,
    n_obstacles: int | None = None,
) -> EpisodeResult:
    """Scene generation plus episode run for one (seed, index) pair."""
    from .scenes import make_scene

    scene_rng, episode_rng, policy_rng = episode_seeds(master_seed, index)
    scene = make_scene(setup_kind, scene_rng, model=model, n_obstacles=n_obstacles)
    return run_episode(scene, policy, predictor_model, config, episode_rng, policy_rng, model=model)


@dataclass
class EvalSummary:
    setup_kind: str
    episodes: int
    success_rate: float
    time_mean_success: float
    time_std_success: float
    time_mean_all: float
    results: list  # per-episode EpisodeResult


def summarize(setup_kind: str, results) -> EvalSummary:
    succ = [r for r in results if r.success]
    times = np.array([r.grasping_time for r in succ]) if succ else np.empty(0)
    return EvalSummary(
        setup_kind=setup_kind,
        episodes=len(results),
        success_rate=len(succ) / len(results) if results else 0.0,
        time_mean_success=float(times.mean()) if len(times) else float("nan"),
        time_std_success=float(times.std()) if len(times) else float("nan"),
        time_mean_all=float(np.mean([r.final_time for r in results])) if results else float("nan"),
        results=list(results),
    )


def evaluate(
    policy,
    setup_kind: str,
    n_episodes: int,
    master_seed: int,
    predictor_model,
    config: EpisodeConfig | None = None,
    model: ArmModel | None = None,
    n_obstacles: int | None = None,
) -> EvalSummary:
    """Sequential evaluation; the harness parallelizes over workers."""
    if n_episodes <= 0:
        raise ValueError("n_episodes must be > 0")
    if config is None:
        config = EpisodeConfig()
    results = [
        run_indexed_episode(
            setup_kind, i, master_seed, policy, predictor_model, config,
            model=model, n_obstacles=n_obstacles,
        )
        for i in range(n_episodes)
    ]
    return summarize(setup_kind, results)
