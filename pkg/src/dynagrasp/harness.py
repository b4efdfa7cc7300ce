"""Command-line interface, configuration, seeding, and experiment export.

Configuration is a flat key=value text format with `include` support; every
key has a registered default and unknown keys are rejected.  All emitted
CSV files start with a config-hash comment so results stay traceable to the
exact configuration.  Episode work parallelizes over processes; results are
a pure function of the master seed and never of the worker count.
"""

from __future__ import annotations

import argparse
import hashlib
import math
import os
import sys
from multiprocessing import get_context

import numpy as np

from . import meta as meta_mod
from .arm import ArmModel, ik
from .baselines import (
    FixedPolicy,
    OnlineIKConfig,
    OnlineIKPolicy,
    OnlineReachabilityPolicy,
    RandomPolicy,
    ReachabilityConfig,
    bo_search,
    grid_search,
)
from .conveyor import ObsNoise, pose_at
from .grasp import pregenerate_grasps, world_grasps
from .meta import MetaController, PPOConfig, load_policy
from .planner import CostModel, birrt_plan
from .predictor import (
    AnalyticPredictorModel,
    gen_dataset,
    load_dataset,
    load_predictor,
    save_dataset,
    save_predictor,
    train_predictor,
)
from .scenes import make_scene, scene_from_text, scene_to_text
from .sim import EpisodeConfig, run_episode, run_indexed_episode, summarize

DEFAULTS = {
    "setup": "blocks_3_6",
    "episodes": "2000",
    "seed": "0",
    "workers": "1",
    "n_obstacles": "",
    "policy": "fixed:2.0,1.0",
    "predictor": "results/predictor.bin",
    "out": "",
    "cost.c_cc": "2e-3",
    "cost.c_ext": "8e-4",
    "cost.c_pred": "0.02",
    "cost.c_ik": "0.010",
    "noise.sigma_pos": "0.010",
    "noise.sigma_phi": "0.02",
    "episode.exec_slice": "0.4",
    "episode.grasp_trigger_pos": "0.03",
    "episode.grasp_trigger_phi": "0.26",
    "episode.retreat_dist": "0.05",
    "episode.retreat_speed": "0.25",
    "episode.ik_restarts": "12",
    "episode.ik_iters": "40",
    "online.segments": "3",
    "online.t_t": "1.0",
    "reach.attempts": "4",
    "ppo.gamma": "0.95",
    "ppo.gae_lambda": "0.95",
    "ppo.clip": "0.2",
    "ppo.lr": "3e-4",
    "ppo.epochs_per_batch": "4",
    "ppo.batch_episodes": "64",
    "ppo.minibatches": "4",
    "ppo.value_coef": "0.5",
    "ppo.std_start": "1.0",
    "ppo.std_floor": "0.05",
    "ppo.std_decrement": "0.05",
    "ppo.std_episodes_per_step": "5000",
    "ppo.norm_freeze_after": "1000",
    "train.total_episodes": "24000",
    "train.eval_every": "4000",
    "dataset.trajectories": "2500",
    "dataset.snapshots": "10",
    "dataset.zero_frac": "0.125",
    "predtrain.epochs": "120",
    "predtrain.lr": "3e-3",
    "predtrain.batch": "128",
    "grid.trials": "100",
    "bo.iterations": "60",
    "bo.trials": "50",
    "curve.episodes": "2000",
    "curve.max_obstacles": "9",
    "calibrate.instances": "300",
    "calibrate.budget": "4.0",
}


class ConfigError(ValueError):
    pass


class RunConfig:
    """Flat key=value configuration with include support."""

    def __init__(self, overrides=None):
        self.values = dict(DEFAULTS)
        for k, v in (overrides or {}).items():
            self.set(k, v)

    def set(self, key: str, value: str):
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        self.values[key] = value

    def load_file(self, path: str):
        with open(path) as f:
            for raw in f:
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if line.startswith("include "):
                    inc = line.split(None, 1)[1]
                    self.load_file(os.path.join(os.path.dirname(path), inc))
                    continue
                if "=" not in line:
                    raise ConfigError(f"malformed config line {raw.rstrip()!r}")
                key, value = (s.strip() for s in line.split("=", 1))
                self.set(key, value)

    def get(self, key: str) -> str:
        return self.values[key]

    def get_float(self, key: str) -> float:
        return float(self.values[key])

    def get_int(self, key: str) -> int:
        return int(self.values[key])

    def hash(self) -> str:
        # workers and output location are operational: they never change
        # results, so they stay out of the provenance hash
        skip = {"workers", "out"}
        text = "\n".join(f"{k}={self.values[k]}" for k in sorted(self.values) if k not in skip)
        return hashlib.sha256(text.encode()).hexdigest()[:12]

    # --- assembled objects ----------------------------------------------------

    def out_dir(self) -> str:
        out = self.values["out"] or os.environ.get("DYNAGRASP_OUT", "results")
        os.makedirs(out, exist_ok=True)
        return out

    def cost_model(self) -> CostModel:
        return CostModel(
            c_cc=self.get_float("cost.c_cc"),
            c_ext=self.get_float("cost.c_ext"),
            c_pred=self.get_float("cost.c_pred"),
            c_ik=self.get_float("cost.c_ik"),
        )

    def episode_config(self) -> EpisodeConfig:
        return EpisodeConfig(
            exec_slice=self.get_float("episode.exec_slice"),
            grasp_trigger_pos=self.get_float("episode.grasp_trigger_pos"),
            grasp_trigger_phi=self.get_float("episode.grasp_trigger_phi"),
            retreat_dist=self.get_float("episode.retreat_dist"),
            retreat_speed=self.get_float("episode.retreat_speed"),
            noise=ObsNoise(self.get_float("noise.sigma_pos"), self.get_float("noise.sigma_phi")),
            cost=self.cost_model(),
            ik_restarts=self.get_int("episode.ik_restarts"),
            ik_iters=self.get_int("episode.ik_iters"),
        )

    def ppo_config(self) -> PPOConfig:
        g = self.get_float
        return PPOConfig(
            gamma=g("ppo.gamma"),
            gae_lambda=g("ppo.gae_lambda"),
            clip=g("ppo.clip"),
            lr=g("ppo.lr"),
            epochs_per_batch=self.get_int("ppo.epochs_per_batch"),
            batch_episodes=self.get_int("ppo.batch_episodes"),
            minibatches=self.get_int("ppo.minibatches"),
            value_coef=g("ppo.value_coef"),
            std_start=g("ppo.std_start"),
            std_floor=g("ppo.std_floor"),
            std_decrement=g("ppo.std_decrement"),
            std_episodes_per_step=self.get_int("ppo.std_episodes_per_step"),
            norm_freeze_after=self.get_int("ppo.norm_freeze_after"),
        )

    def predictor_model(self):
        spec = self.values["predictor"]
        if spec == "analytic":
            return AnalyticPredictorModel()
        with open(spec, "rb") as f:
            return load_predictor(f)

    def build_policy(self):
        spec = self.values["policy"]
        if spec.startswith("fixed:"):
            tl, tt = (float(v) for v in spec[len("fixed:"):].split(","))
            return FixedPolicy(tl, tt)
        if spec == "random":
            return RandomPolicy()
        if spec.startswith("meta:"):
            return MetaController(load_policy(spec[len("meta:"):]), std=0.0)
        if spec == "online_ik":
            return OnlineIKPolicy(
                OnlineIKConfig(
                    segments=self.get_int("online.segments"),
                    T_T=self.get_float("online.t_t"),
                    ik_restarts=self.get_int("episode.ik_restarts"),
                    ik_iters=self.get_int("episode.ik_iters"),
                )
            )
        if spec == "online_reach":
            return OnlineReachabilityPolicy(
                OnlineIKConfig(
                    segments=self.get_int("online.segments"),
                    T_T=self.get_float("online.t_t"),
                    ik_restarts=self.get_int("episode.ik_restarts"),
                    ik_iters=self.get_int("episode.ik_iters"),
                ),
                ReachabilityConfig(
                    attempts=self.get_int("reach.attempts"),
                    T_T=self.get_float("online.t_t"),
                ),
            )
        raise ConfigError(f"unknown policy spec {spec!r}")


# --- parallel episode execution ----------------------------------------------------

_POOL_STATE = {}


def _pool_init(predictor_blob, episode_config):
    import io

    if predictor_blob is None:
        _POOL_STATE["predictor"] = AnalyticPredictorModel()
    else:
        _POOL_STATE["predictor"] = load_predictor(io.BytesIO(predictor_blob))
    _POOL_STATE["config"] = episode_config
    _POOL_STATE["model"] = ArmModel()


def _episode_row(res):
    return (res.success, res.termination, res.grasping_time, res.final_time, len(res.trace))


def _run_chunk(task):
    setup_kind, master_seed, indices, policy, n_obstacles, record, std = task
    predictor_model = _POOL_STATE["predictor"]
    config = _POOL_STATE["config"]
    model = _POOL_STATE["model"]
    rows = []
    rollouts = []
    for idx in indices:
        if record:
            ctrl = MetaController(policy, std=std, record=True)
            res = run_indexed_episode(
                setup_kind, idx, master_seed, ctrl, predictor_model, config,
                model=model, n_obstacles=n_obstacles,
            )
            rollouts.append((ctrl.take_rollout(res.success), res.success))
        else:
            res = run_indexed_episode(
                setup_kind, idx, master_seed, policy, predictor_model, config,
                model=model, n_obstacles=n_obstacles,
            )
        rows.append(_episode_row(res))
    return rows, rollouts


class EpisodeRunner:
    """Runs batches of indexed episodes, optionally on worker processes."""

    def __init__(self, cfg: RunConfig, predictor_blob: bytes | None = None):
        self.workers = max(1, cfg.get_int("workers"))
        if predictor_blob is None and cfg.values["predictor"] != "analytic":
            with open(cfg.values["predictor"], "rb") as f:
                predictor_blob = f.read()
        self._initargs = (predictor_blob, cfg.episode_config())
        self._pool = None
        if self.workers > 1:
            ctx = get_context("fork")
            self._pool = ctx.Pool(self.workers, initializer=_pool_init, initargs=self._initargs)
        else:
            _pool_init(*self._initargs)

    def close(self):
        if self._pool is not None:
            self._pool.close()
            self._pool.join()
            self._pool = None

    def run(self, setup_kind, master_seed, indices, policy, n_obstacles=None,
            record=False, std=0.0):
        """Returns (rows, rollouts) in episode-index order."""
        chunks = [c for c in np.array_split(np.asarray(indices), self.workers) if len(c)]
        tasks = [
            (setup_kind, master_seed, [int(i) for i in c], policy, n_obstacles, record, std)
            for c in chunks
        ]
        if self._pool is None:
            outs = [_run_chunk(t) for t in tasks]
        else:
            outs = self._pool.map(_run_chunk, tasks)
        rows = [r for out in outs for r in out[0]]
        rollouts = [r for out in outs for r in out[1]]
        return rows, rollouts


def _rows_to_results(rows):
    from .sim import EpisodeResult

    return [
        EpisodeResult(success=s, grasping_time=gt, termination=term, trace=[None] * it,
                      final_time=ft, charges={})
        for (s, term, gt, ft, it) in rows
    ]


# --- CSV helpers ----------------------------------------------------------------


def write_csv(path: str, cfg_hash: str, header: str, rows) -> None:
    with open(path, "w") as f:
        f.write(f"# config={cfg_hash}\n")
        f.write(header + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


# --- subcommands -----------------------------------------------------------------


def _cfg_from_args(args) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        cfg.load_file(args.config)
    for item in getattr(args, "set", []) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        cfg.set(key.strip(), value.strip())
    for key in ("setup", "policy", "predictor", "out"):
        v = getattr(args, key.replace(".", "_"), None)
        if v is not None:
            cfg.set(key, v)
    for key in ("episodes", "seed", "workers"):
        v = getattr(args, key, None)
        if v is not None:
            cfg.set(key, str(v))
    return cfg


def cmd_eval(args) -> int:
    cfg = _cfg_from_args(args)
    out = cfg.out_dir()
    policy = cfg.build_policy()
    n_obs = int(cfg.values["n_obstacles"]) if cfg.values["n_obstacles"] else None
    runner = EpisodeRunner(cfg)
    try:
        rows, _ = runner.run(
            cfg.get("setup"), cfg.get_int("seed"), range(cfg.get_int("episodes")),
            policy, n_obstacles=n_obs,
        )
    finally:
        runner.close()
    results = _rows_to_results(rows)
    summary = summarize(cfg.get("setup"), results)
    tag = f"{cfg.get('setup')}_{cfg.get('policy').replace(':', '-').replace(',', '_')}_s{cfg.get('seed')}"
    write_csv(
        os.path.join(out, f"eval_{tag}.csv"),
        cfg.hash(),
        "episode,success,termination,grasping_time,final_time,iterations",
        [(i, int(r[0]), r[1], r[2], r[3], r[4]) for i, r in enumerate(rows)],
    )
    write_csv(
        os.path.join(out, f"eval_summary_{tag}.csv"),
        cfg.hash(),
        "setup,policy,episodes,success_rate,time_mean_success,time_std_success,time_mean_all",
        [(
            cfg.get("setup"), cfg.get("policy"), summary.episodes, summary.success_rate,
            summary.time_mean_success, summary.time_std_success, summary.time_mean_all,
        )],
    )
    print(
        f"setup={cfg.get('setup')} policy={cfg.get('policy')} episodes={summary.episodes} "
        f"success_rate={summary.success_rate:.4f} time_mean_success={summary.time_mean_success:.3f}"
    )
    return 0


def _pair_evaluator(cfg: RunConfig, runner: EpisodeRunner):
    """evaluate_pair(T_L, T_T, trials, seed) for the offline searches."""

    def evaluate_pair(tl, tt, trials, seed):
        rows, _ = runner.run(cfg.get("setup"), int(seed) % (2**31), range(trials),
                             FixedPolicy(tl, tt))
        return sum(1 for r in rows if r[0]) / len(rows)

    return evaluate_pair


def cmd_grid_search(args) -> int:
    cfg = _cfg_from_args(args)
    out = cfg.out_dir()
    runner = EpisodeRunner(cfg)
    try:
        best, rows = grid_search(
            _pair_evaluator(cfg, runner),
            cfg.get_int("grid.trials"),
            np.random.default_rng(cfg.get_int("seed")),
        )
    finally:
        runner.close()
    write_csv(
        os.path.join(out, f"grid_{cfg.get('setup')}_s{cfg.get('seed')}.csv"),
        cfg.hash(),
        "T_L,T_T,success_rate,episodes",
        rows,
    )
    print(f"grid-best T_L={best[0]} T_T={best[1]}")
    return 0


def cmd_bo_search(args) -> int:
    cfg = _cfg_from_args(args)
    out = cfg.out_dir()
    runner = EpisodeRunner(cfg)
    try:
        best, history = bo_search(
            _pair_evaluator(cfg, runner),
            cfg.get_int("bo.iterations"),
            np.random.default_rng(cfg.get_int("seed")),
            trials_per_eval=cfg.get_int("bo.trials"),
        )
    finally:
        runner.close()
    write_csv(
        os.path.join(out, f"bo_{cfg.get('setup')}_s{cfg.get('seed')}.csv"),
        cfg.hash(),
        "iteration,T_L,T_T,success,incumbent",
        history,
    )
    print(f"bo-best T_L={best[0]:.3f} T_T={best[1]:.3f}")
    return 0


def cmd_curve_obstacles(args) -> int:
    cfg = _cfg_from_args(args)
    out = cfg.out_dir()
    policy = cfg.build_policy()
    episodes = cfg.get_int("curve.episodes")
    runner = EpisodeRunner(cfg)
    rows = []
    try:
        for n in range(cfg.get_int("curve.max_obstacles") + 1):
            res, _ = runner.run("blocks_3_6", cfg.get_int("seed"), range(episodes),
                                policy, n_obstacles=n)
            rate = sum(1 for r in res if r[0]) / len(res)
            rows.append((n, rate, episodes))
            print(f"n_obstacles={n} success_rate={rate:.4f}")
    finally:
        runner.close()
    tag = cfg.get("policy").replace(":", "-").replace(",", "_")
    write_csv(
        os.path.join(out, f"curve_{tag}_s{cfg.get('seed')}.csv"),
        cfg.hash(),
        "n_obstacles,success_rate,episodes",
        rows,
    )
    return 0


def cmd_calibrate(args) -> int:
    cfg = _cfg_from_args(args)
    cost = cfg.cost_model()
    model = ArmModel()
    rng = np.random.default_rng(cfg.get_int("seed"))
    budget = cfg.get_float("calibrate.budget")
    times = []
    fails = 0
    n = cfg.get_int("calibrate.instances")
    for i in range(n):
        scene = make_scene("blocks_3_6", rng, model=model)
        t = rng.uniform(0.0, scene.trajectory.duration)
        grasps = world_grasps(pose_at(scene.trajectory, t), pregenerate_grasps(scene.object_spec))
        goal = None
        for g in grasps:
            goal = ik(model, g, seed=scene.arm_init, rng=rng)
            if goal is not None:
                break
        if goal is None:
            continue
        res = birrt_plan(model, None, scene.arm_init, goal, budget, cost, rng,
                         packed=scene.packed)
        if res.success:
            times.append(res.elapsed)
        else:
            fails += 1
    times = np.array(times)
    med = float(np.median(times))
    p90 = float(np.percentile(times, 90))
    ok = 0.1 <= med <= 1.0 and p90 > 1.5
    print(f"instances={n} solved={len(times)} failed={fails}")
    print(f"successful-planning-time median={med:.3f}s p90={p90:.3f}s")
    print(f"targets: median in [0.1, 1.0] and p90 > 1.5 -> {'PASS' if ok else 'FAIL'}")
    return 0


def cmd_gen_dataset(args) -> int:
    cfg = _cfg_from_args(args)
    noise = ObsNoise(cfg.get_float("noise.sigma_pos"), cfg.get_float("noise.sigma_phi"))
    ds = gen_dataset(
        cfg.get_int("dataset.trajectories"),
        noise,
        np.random.default_rng(cfg.get_int("seed")),
        snapshots_per_traj=cfg.get_int("dataset.snapshots"),
        zero_lookahead_frac=cfg.get_float("dataset.zero_frac"),
    )
    path = args.out_file or os.path.join(cfg.out_dir(), "dataset.bin")
    with open(path, "wb") as f:
        save_dataset(ds, f)
    print(f"wrote {ds.X.shape[0]} samples to {path}")
    return 0


def cmd_train_predictor(args) -> int:
    cfg = _cfg_from_args(args)
    with open(args.dataset, "rb") as f:
        ds = load_dataset(f)
    model, hist = train_predictor(
        ds,
        epochs=cfg.get_int("predtrain.epochs"),
        lr=cfg.get_float("predtrain.lr"),
        rng=np.random.default_rng(cfg.get_int("seed")),
        batch_size=cfg.get_int("predtrain.batch"),
    )
    path = args.out_file or os.path.join(cfg.out_dir(), "predictor.bin")
    with open(path, "wb") as f:
        save_predictor(model, f)
    write_csv(
        path + ".curve.csv",
        cfg.hash(),
        "epoch,train_loss,val_loss,val_pos_rmse",
        [
            (i, hist["train_loss"][i], hist["val_loss"][i], hist["val_pos_rmse"][i])
            for i in range(len(hist["train_loss"]))
        ],
    )
    print(f"wrote {path}; final val position rmse {hist['val_pos_rmse'][-1]*1000:.1f}mm")
    return 0


def cmd_train_meta(args) -> int:
    cfg = _cfg_from_args(args)
    out = cfg.out_dir()
    predictor_model = cfg.predictor_model()
    episode_config = cfg.episode_config()
    runner = EpisodeRunner(cfg)
    setup = cfg.get("setup")
    seed = cfg.get_int("seed")

    def rollout_fn(policy, std, start, count):
        _, rollouts = runner.run(setup, seed, range(start, start + count), policy,
                                 record=True, std=std)
        return rollouts

    prefix = os.path.join(out, f"meta_{setup}_s{seed}")
    curve_rows = []

    def log_fn(row, diag):
        curve_rows.append(row)
        if len(curve_rows) % 10 == 0:
            print(
                f"ep={row[0]} running_success={row[1]:.3f} mean_T_L={row[2]:.2f} "
                f"mean_T_T={row[3]:.2f} std={row[4]:.2f} kl={diag.get('approx_kl', 0):.4f}",
                flush=True,
            )

    try:
        _, curve, checkpoints = meta_mod.train_meta(
            setup,
            cfg.ppo_config(),
            cfg.get_int("train.total_episodes"),
            cfg.get_int("train.eval_every"),
            seed,
            predictor_model,
            episode_config,
            prefix,
            rollout_fn=rollout_fn,
            log_fn=log_fn,
        )
    finally:
        runner.close()
    write_csv(
        os.path.join(out, f"train_curve_{setup}_s{seed}.csv"),
        cfg.hash(),
        "episode,running_success,mean_T_L,mean_T_T,std",
        curve,
    )
    print("checkpoints: " + " ".join(checkpoints))
    return 0


def cmd_replay(args) -> int:
    cfg = _cfg_from_args(args)
    with open(args.scene_file) as f:
        scene = scene_from_text(f.read())
    policy = cfg.build_policy()
    predictor_model = cfg.predictor_model()
    seed = cfg.get_int("seed")
    _, episode_rng, policy_rng = __import__("dynagrasp.sim", fromlist=["episode_seeds"]).episode_seeds(seed, 0)
    res = run_episode(scene, policy, predictor_model, cfg.episode_config(),
                      episode_rng, policy_rng)
    out = cfg.out_dir()
    path = args.trace_out or os.path.join(out, "trace.txt")
    with open(path, "w") as f:
        f.write(f"# config={cfg.hash()}\n")
        f.write("# iter t_start T_L T_T policy_time pred_x pred_y pred_phi "
                "gp_success gp_index gp_time mp_attempted mp_success mp_time exec_time t_end\n")
        for r in res.trace:
            f.write(
                f"{r.index} {r.t_start!r} {r.action.T_L!r} {r.action.T_T!r} {r.policy_time!r} "
                f"{r.predicted_pose.x!r} {r.predicted_pose.y!r} {r.predicted_pose.phi!r} "
                f"{int(r.gp_success)} {r.gp_index} {r.gp_time!r} {int(r.mp_attempted)} "
                f"{int(r.mp_success)} {r.mp_time!r} {r.exec_time!r} {r.t_end!r}\n"
            )
    print(f"termination={res.termination} success={res.success} "
          f"grasping_time={res.grasping_time:.3f} trace={path}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="dynagrasp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key")
        p.add_argument("--setup", help="setup kind")
        p.add_argument("--policy", help="policy spec")
        p.add_argument("--predictor", help="predictor file or 'analytic'")
        p.add_argument("--episodes", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("eval", help="evaluate a policy on a setup")
    add_common(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("grid-search", help="8x8 fixed-pair sweep")
    add_common(p)
    p.set_defaults(fn=cmd_grid_search)

    p = sub.add_parser("bo-search", help="forest-surrogate Bayesian optimization")
    add_common(p)
    p.set_defaults(fn=cmd_bo_search)

    p = sub.add_parser("curve-obstacles", help="success rate vs obstacle count")
    add_common(p)
    p.set_defaults(fn=cmd_curve_obstacles)

    p = sub.add_parser("calibrate", help="planner virtual-cost calibration report")
    add_common(p)
    p.set_defaults(fn=cmd_calibrate)

    p = sub.add_parser("gen-dataset", help="generate predictor training data")
    add_common(p)
    p.add_argument("--out-file")
    p.set_defaults(fn=cmd_gen_dataset)

    p = sub.add_parser("train-predictor", help="train the pose predictor")
    add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out-file")
    p.set_defaults(fn=cmd_train_predictor)

    p = sub.add_parser("train-meta", help="train the meta-controller with PPO")
    add_common(p)
    p.set_defaults(fn=cmd_train_meta)

    p = sub.add_parser("replay", help="re-run one episode from a scene file")
    add_common(p)
    p.add_argument("--scene-file", required=True)
    p.add_argument("--trace-out")
    p.set_defaults(fn=cmd_replay)

    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 1 if e.code not in (0, None) else 0
    try:
        return args.fn(args)
    except (ConfigError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # runtime failures
        print(f"runtime error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
