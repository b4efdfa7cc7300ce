"""Learned meta-controller: featurization, stacked state, policy, and PPO.

The policy maps a 5-frame window of per-iteration scene features to a
Gaussian over (look-ahead time, planning budget).  Actor means are squashed
to the action box with a scaled sigmoid; exploration noise is added before
a safety clamp, and the recorded log-probability is that of the pre-clamp
sample.  Training uses clipped-surrogate PPO with GAE and a sparse
terminal reward, with the exploration std annealed on a fixed schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .geom2d import Pose2, point_shape_distance

ACTION_LO = np.array([0.0, 0.0])
ACTION_HI = np.array([8.0, 4.0])

N_OBSTACLE_SLOTS = 5
OBSTACLE_SLOT_DIM = 6  # x, y, phi, dim1, dim2, shape flag
STACK = 5  # frames per stacked state

FLAG_EMPTY, FLAG_RECT, FLAG_CIRCLE = 0.0, 1.0, 2.0


def frame_dim(n_joints: int) -> int:
    proprio = n_joints + 3
    target = 13
    obstacles = N_OBSTACLE_SLOTS * OBSTACLE_SLOT_DIM
    prev_actions = 10 + n_joints
    return proprio + target + obstacles + prev_actions


@dataclass(frozen=True)
class MetaAction:
    T_L: float
    T_T: float


@dataclass
class PrevActions:
    """Previous-iteration pipeline outcomes, zeroed on iteration 0."""

    T_L: float = 0.0
    T_T: float = 0.0
    mp_success: float = 0.0
    mp_time: float = 0.0
    gp_success: float = 0.0
    grasp_pose: tuple = (0.0, 0.0, 0.0)
    gp_time: float = 0.0
    ik_config: np.ndarray | None = None
    dist_to_ik: float = 0.0


@dataclass
class IterationContext:
    """Everything featurize and the online baselines need for one iteration."""

    q: np.ndarray
    ee: Pose2
    buffer: object  # predictor.HistoryBuffer
    obs_pose: Pose2
    obj_dims: tuple
    observed_obstacles: list
    prev: PrevActions
    predicted_prev: Pose2 | None
    model: object  # arm.ArmModel
    predictor: object  # predictor.PredictorModel
    packed_obstacles: tuple
    cost: object  # planner.CostModel
    rng: np.random.Generator
    stacked: np.ndarray | None = None  # (STACK, frame_dim), set by the sim
    obj_spec: object = None  # grasp.ObjectSpec of the episode's target


def featurize(ctx: IterationContext) -> np.ndarray:
    """One observation frame; obstacle slots sorted nearest-to-ee first."""
    n = len(ctx.q)
    out = np.zeros(frame_dim(n))
    i = 0
    out[i : i + n] = ctx.q
    i += n
    out[i : i + 3] = (ctx.ee.x, ctx.ee.y, ctx.ee.phi)
    i += 3

    vx, vy, _ = ctx.buffer.velocity_estimate()
    dist = math.hypot(ctx.obs_pose.x - ctx.ee.x, ctx.obs_pose.y - ctx.ee.y)
    out[i : i + 4] = (vx, vy, math.hypot(vx, vy), dist)
    i += 4
    out[i : i + 3] = (ctx.obs_pose.x, ctx.obs_pose.y, ctx.obs_pose.phi)
    i += 3
    out[i : i + 2] = ctx.obj_dims
    i += 2
    if ctx.predicted_prev is not None:
        p = ctx.predicted_prev
        out[i : i + 3] = (p.x, p.y, p.phi)
        out[i + 3] = math.hypot(p.x - ctx.ee.x, p.y - ctx.ee.y)
    i += 4

    ee_pos = (ctx.ee.x, ctx.ee.y)
    ranked = sorted(
        enumerate(ctx.observed_obstacles),
        key=lambda kv: (point_shape_distance(ee_pos, kv[1]), kv[0]),
    )
    from .geom2d import Circle, OrientedRect

    for slot in range(N_OBSTACLE_SLOTS):
        base = i + slot * OBSTACLE_SLOT_DIM
        if slot >= len(ranked):
            continue
        ob = ranked[slot][1]
        if isinstance(ob, OrientedRect):
            out[base : base + 6] = (
                ob.pose.x, ob.pose.y, ob.pose.phi, 2 * ob.half_w, 2 * ob.half_h, FLAG_RECT,
            )
        elif isinstance(ob, Circle):
            out[base : base + 6] = (
                ob.center[0], ob.center[1], 0.0, 2 * ob.radius, 2 * ob.radius, FLAG_CIRCLE,
            )
        else:
            raise TypeError(f"cannot featurize obstacle {type(ob)}")
    i += N_OBSTACLE_SLOTS * OBSTACLE_SLOT_DIM

    pa = ctx.prev
    out[i : i + 5] = (pa.T_L, pa.T_T, pa.mp_success, pa.mp_time, pa.gp_success)
    i += 5
    out[i : i + 3] = pa.grasp_pose
    i += 3
    out[i] = pa.gp_time
    i += 1
    if pa.ik_config is not None:
        out[i : i + n] = pa.ik_config
    i += n
    out[i] = pa.dist_to_ik
    i += 1
    if not np.isfinite(out).all():
        raise ValueError("non-finite feature value")
    return out


def stack_frames(frames, n_joints: int) -> np.ndarray:
    """(STACK, frame_dim) stacked state, oldest first, zero-padded."""
    out = np.zeros((STACK, frame_dim(n_joints)))
    tail = frames[-STACK:]
    out[STACK - len(tail) :] = tail
    return out


# --- policy -------------------------------------------------------------------


@dataclass
class RunningNorm:
    count: float = 0.0
    mean: np.ndarray | None = None
    m2: np.ndarray | None = None
    frozen: bool = False

    def update(self, frames: np.ndarray) -> None:
        if self.frozen:
            return
        for x in np.atleast_2d(frames):
            self.count += 1.0
            if self.mean is None:
                self.mean = x.copy()
                self.m2 = np.zeros_like(x)
                continue
            d = x - self.mean
            self.mean += d / self.count
            self.m2 += d * (x - self.mean)

    @property
    def std(self) -> np.ndarray:
        if self.mean is None or self.count < 2:
            return np.ones_like(self.mean) if self.mean is not None else None
        s = np.sqrt(self.m2 / (self.count - 1.0))
        s[s < 1e-6] = 1.0
        return s


@dataclass
class MetaPolicy:
    frame_encoder: nn.Net  # frame_dim -> 64 tanh
    trunk: nn.Net  # 5*64 -> 64 tanh
    actor: nn.Net  # 64 -> 2 pre-squash means
    critic: nn.Net  # 64 -> 1 value
    norm_mu: np.ndarray
    norm_sd: np.ndarray

    def copy(self) -> "MetaPolicy":
        return MetaPolicy(
            self.frame_encoder.copy(), self.trunk.copy(), self.actor.copy(),
            self.critic.copy(), self.norm_mu.copy(), self.norm_sd.copy(),
        )

    def parameters(self):
        return (
            self.frame_encoder.parameters() + self.trunk.parameters()
            + self.actor.parameters() + self.critic.parameters()
        )


def make_policy(n_joints: int, rng: np.random.Generator) -> MetaPolicy:
    Fd = frame_dim(n_joints)
    return MetaPolicy(
        frame_encoder=nn.make_net((Fd, 64), ("tanh",), rng),
        trunk=nn.make_net((STACK * 64, 64), ("tanh",), rng),
        actor=nn.make_net((64, 2), ("identity",), rng),
        critic=nn.make_net((64, 1), ("identity",), rng),
        norm_mu=np.zeros(Fd),
        norm_sd=np.ones(Fd),
    )


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def _policy_forward(policy: MetaPolicy, stacked: np.ndarray):
    """stacked: (B, STACK, Fd) or (STACK, Fd).  Returns (mean, value, caches)."""
    single = stacked.ndim == 2
    S = stacked[None] if single else stacked
    B = S.shape[0]
    x = (S - policy.norm_mu) / policy.norm_sd
    flat = x.reshape(B * STACK, -1)
    enc, c_enc = nn.forward(policy.frame_encoder, flat)
    trunk_in = enc.reshape(B, STACK * enc.shape[-1])
    h, c_trunk = nn.forward(policy.trunk, trunk_in)
    z, c_actor = nn.forward(policy.actor, h)
    v, c_critic = nn.forward(policy.critic, h)
    mean = ACTION_LO + (ACTION_HI - ACTION_LO) * _sigmoid(z)
    caches = (c_enc, c_trunk, c_actor, c_critic, z)
    if single:
        return mean[0], float(v[0, 0]), caches
    return mean, v[:, 0], caches


def act(policy: MetaPolicy, stacked: np.ndarray, std: float, rng: np.random.Generator):
    """Sample an action; returns (MetaAction, pre_clamp, log_prob, value).

    std == 0 gives the squashed mean deterministically (log_prob 0).
    """
    if std < 0:
        raise ValueError("std must be >= 0")
    mean, value, _ = _policy_forward(policy, stacked)
    if std == 0.0:
        pre = mean.copy()
        logp = 0.0
    else:
        pre = mean + std * rng.standard_normal(2)
        z = (pre - mean) / std
        logp = float(-0.5 * (z * z).sum() - 2 * math.log(std) - math.log(2 * math.pi))
    a = np.clip(pre, ACTION_LO, ACTION_HI)
    return MetaAction(float(a[0]), float(a[1])), pre, logp, value


def log_prob_of(mean: np.ndarray, std: float, pre_clamp: np.ndarray):
    z = (pre_clamp - mean) / std
    return -0.5 * (z * z).sum(axis=-1) - 2 * math.log(std) - math.log(2 * math.pi)


# --- PPO ----------------------------------------------------------------------


@dataclass
class PPOConfig:
    gamma: float = 0.95
    gae_lambda: float = 0.95
    clip: float = 0.2
    lr: float = 3e-4
    epochs_per_batch: int = 4
    batch_episodes: int = 64
    minibatches: int = 4
    value_coef: float = 0.5
    std_start: float = 1.0
    std_floor: float = 0.05
    std_decrement: float = 0.05
    std_episodes_per_step: int = 5000
    norm_freeze_after: int = 1000

    def std_at(self, episodes_done: int) -> float:
        steps = episodes_done // self.std_episodes_per_step
        return max(self.std_floor, self.std_start - self.std_decrement * steps)


@dataclass
class EpisodeRollout:
    states: np.ndarray  # (T, STACK, Fd) raw (unnormalized) stacked states
    pre_actions: np.ndarray  # (T, 2) pre-clamp samples
    log_probs: np.ndarray  # (T,)
    values: np.ndarray  # (T,)
    rewards: np.ndarray  # (T,) zeros except possibly terminal 1
    std: float


def gae(rewards, values, gamma, lam):
    """Terminal-episode generalized advantage estimation."""
    T = len(rewards)
    adv = np.zeros(T)
    last = 0.0
    for t in range(T - 1, -1, -1):
        next_v = values[t + 1] if t + 1 < T else 0.0
        delta = rewards[t] + gamma * next_v - values[t]
        last = delta + gamma * lam * last
        adv[t] = last
    return adv, adv + values


def ppo_loss(policy: MetaPolicy, states, pre_actions, old_logp, adv, ret, std, cfg: PPOConfig):
    """Clipped surrogate + value loss; returns (loss, grads, diagnostics)."""
    B = len(states)
    mean, values, caches = _policy_forward(policy, states)
    c_enc, c_trunk, c_actor, c_critic, z = caches
    new_logp = log_prob_of(mean, std, pre_actions)
    ratio = np.exp(new_logp - old_logp)
    clipped = np.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip)
    surr = np.minimum(ratio * adv, clipped * adv)
    v_err = values - ret
    loss = float(-surr.mean() + cfg.value_coef * 0.5 * (v_err * v_err).mean())

    # gradient of -surr wrt new_logp: active only where the raw ratio wins
    raw_active = ratio * adv <= clipped * adv + 1e-12
    dlogp = np.where(raw_active, -ratio * adv, 0.0) / B  # (B,)
    # dlogp/dmean = (pre - mean) / std^2
    dmean = dlogp[:, None] * (pre_actions - mean) / (std * std)
    # mean = lo + span*sigmoid(z)
    sig = _sigmoid(z)
    dz = dmean * (ACTION_HI - ACTION_LO) * sig * (1.0 - sig)
    dv = (cfg.value_coef * v_err / B)[:, None]

    g_actor, dh_a = nn.backward(policy.actor, c_actor, dz)
    g_critic, dh_c = nn.backward(policy.critic, c_critic, dv)
    g_trunk, denc_flat = nn.backward(policy.trunk, c_trunk, dh_a + dh_c)
    denc = denc_flat.reshape(B * STACK, -1)
    g_enc, _ = nn.backward(policy.frame_encoder, c_enc, denc)
    grads = g_enc + g_trunk + g_actor + g_critic

    diag = {
        "approx_kl": float(np.mean(old_logp - new_logp)),
        "clip_fraction": float(np.mean((np.abs(ratio - 1.0) > cfg.clip))),
        "value_loss": float(0.5 * (v_err * v_err).mean()),
    }
    return loss, grads, diag


def ppo_update(policy: MetaPolicy, rollouts, cfg: PPOConfig, adam: nn.AdamState,
               rng: np.random.Generator):
    """Multiple clipped-surrogate epochs over a batch of episode rollouts."""
    if not rollouts:
        raise ValueError("empty rollout batch")
    states = np.concatenate([r.states for r in rollouts])
    pre = np.concatenate([r.pre_actions for r in rollouts])
    old_logp = np.concatenate([r.log_probs for r in rollouts])
    advs, rets = [], []
    for r in rollouts:
        total = float(r.rewards.sum())
        if total not in (0.0, 1.0):
            raise ValueError("sparse-reward contract violated: episode sum not in {0, 1}")
        a, g = gae(r.rewards, r.values, cfg.gamma, cfg.gae_lambda)
        advs.append(a)
        rets.append(g)
    adv = np.concatenate(advs)
    ret = np.concatenate(rets)
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    std = rollouts[0].std

    N = len(states)
    last = {}
    for _ in range(cfg.epochs_per_batch):
        order = rng.permutation(N)
        for part in np.array_split(order, cfg.minibatches):
            if len(part) == 0:
                continue
            loss, grads, diag = ppo_loss(
                policy, states[part], pre[part], old_logp[part], adv[part], ret[part], std, cfg
            )
            if not math.isfinite(loss):
                raise FloatingPointError(f"PPO loss diverged: {diag}")
            nn.adam_step(policy.parameters(), grads, adam)
            last = diag
    return last


class MetaController:
    """Policy adapter for the episode engine.

    Inference charges zero virtual time.  With record=True the controller
    keeps the per-step tensors PPO needs; harvest them via take_rollout().
    """

    def __init__(self, policy: MetaPolicy, std: float = 0.0, record: bool = False):
        self.policy = policy
        self.std = std
        self.record = record
        self._states = []
        self._pre = []
        self._logp = []
        self._values = []

    def begin_episode(self):
        self._states = []
        self._pre = []
        self._logp = []
        self._values = []

    def decide(self, ctx: IterationContext):
        action, pre, logp, value = act(self.policy, ctx.stacked, self.std, ctx.rng)
        if self.record:
            self._states.append(ctx.stacked)
            self._pre.append(pre)
            self._logp.append(logp)
            self._values.append(value)
        return action, 0.0

    def take_rollout(self, success: bool) -> EpisodeRollout:
        T = len(self._states)
        rewards = np.zeros(T)
        if success:
            rewards[-1] = 1.0
        return EpisodeRollout(
            states=np.array(self._states),
            pre_actions=np.array(self._pre),
            log_probs=np.array(self._logp),
            values=np.array(self._values),
            rewards=rewards,
            std=self.std,
        )


# --- training loop ----------------------------------------------------------------


def serial_rollouts(
    policy: MetaPolicy,
    std: float,
    setup_kind: str,
    start_index: int,
    count: int,
    master_seed: int,
    predictor_model,
    episode_config,
    model,
):
    """Collect `count` recorded episodes in-process (the default rollout_fn)."""
    from .sim import run_indexed_episode

    out = []
    for j in range(count):
        ctrl = MetaController(policy, std=std, record=True)
        res = run_indexed_episode(
            setup_kind, start_index + j, master_seed, ctrl, predictor_model,
            episode_config, model=model,
        )
        out.append((ctrl.take_rollout(res.success), res.success))
    return out


def train_meta(
    setup_kind: str,
    cfg: PPOConfig,
    total_episodes: int,
    eval_every: int,
    master_seed: int,
    predictor_model,
    episode_config,
    out_prefix: str,
    model=None,
    rollout_fn=None,
    log_fn=None,
):
    """PPO training loop; returns (policy, curve rows, checkpoint prefixes).

    curve rows: (episodes_done, running_success, mean_T_L, mean_T_T, std).
    Checkpoints are written as <out_prefix>_ep<NNN> at every eval_every
    episodes and at the end.
    """
    if model is None:
        from .arm import ArmModel

        model = ArmModel()
    init_rng = np.random.default_rng(np.random.SeedSequence([master_seed, 0x5EED]))
    update_rng = np.random.default_rng(np.random.SeedSequence([master_seed, 0xADA]))
    policy = make_policy(model.n, init_rng)
    adam = nn.AdamState(lr=cfg.lr)
    norm = RunningNorm()
    if rollout_fn is None:
        def rollout_fn(pol, std, start, count):
            return serial_rollouts(
                pol, std, setup_kind, start, count, master_seed,
                predictor_model, episode_config, model,
            )

    recent = []
    curve = []
    checkpoints = []
    episodes_done = 0
    next_checkpoint = eval_every
    while episodes_done < total_episodes:
        std = cfg.std_at(episodes_done)
        batch_n = min(cfg.batch_episodes, total_episodes - episodes_done)
        harvest = rollout_fn(policy, std, episodes_done, batch_n)
        rollouts = [r for r, _ in harvest]
        for _, success in harvest:
            recent.append(1.0 if success else 0.0)
        recent = recent[-1000:]
        episodes_done += batch_n

        diag = ppo_update(policy, rollouts, cfg, adam, update_rng)

        if not norm.frozen:
            for r in rollouts:
                norm.update(r.states[:, -1, :])  # newest frame of each stack
            if episodes_done >= cfg.norm_freeze_after:
                norm.frozen = True
            policy.norm_mu = norm.mean.copy()
            policy.norm_sd = norm.std.copy()

        acts = np.concatenate([
            np.clip(r.pre_actions, ACTION_LO, ACTION_HI) for r in rollouts
        ])
        row = (
            episodes_done,
            float(np.mean(recent)),
            float(acts[:, 0].mean()),
            float(acts[:, 1].mean()),
            std,
        )
        curve.append(row)
        if log_fn is not None:
            log_fn(row, diag)
        if episodes_done >= next_checkpoint or episodes_done >= total_episodes:
            prefix = f"{out_prefix}_ep{episodes_done}"
            save_policy(policy, prefix, episodes_done, std)
            checkpoints.append(prefix)
            while next_checkpoint <= episodes_done:
                next_checkpoint += eval_every
    return policy, curve, checkpoints


# --- checkpoint files -----------------------------------------------------------


def save_policy(policy: MetaPolicy, path_prefix: str, episodes: int, std: float) -> None:
    """Write <prefix>.nets (nn format x4) and <prefix>.manifest text sidecar."""
    with open(path_prefix + ".nets", "wb") as f:
        for net in (policy.frame_encoder, policy.trunk, policy.actor, policy.critic):
            nn.save_net(net, f)
    with open(path_prefix + ".manifest", "w") as f:
        f.write(f"episodes {episodes}\n")
        f.write(f"std {std!r}\n")
        f.write("norm_mu " + ",".join(repr(float(v)) for v in policy.norm_mu) + "\n")
        f.write("norm_sd " + ",".join(repr(float(v)) for v in policy.norm_sd) + "\n")


def load_policy(path_prefix: str) -> MetaPolicy:
    with open(path_prefix + ".nets", "rb") as f:
        nets = [nn.load_net(f) for _ in range(4)]
    norm_mu = norm_sd = None
    with open(path_prefix + ".manifest") as f:
        for line in f:
            key, _, rest = line.partition(" ")
            if key == "norm_mu":
                norm_mu = np.array([float(v) for v in rest.split(",")])
            elif key == "norm_sd":
                norm_sd = np.array([float(v) for v in rest.split(",")])
    if norm_mu is None or norm_sd is None:
        raise ValueError("manifest missing normalization stats")
    return MetaPolicy(nets[0], nets[1], nets[2], nets[3], norm_mu, norm_sd)
