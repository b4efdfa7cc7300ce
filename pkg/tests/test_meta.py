import math

import numpy as np
import pytest

from dynagrasp import nn
from dynagrasp.arm import ArmModel, ee_pose
from dynagrasp.geom2d import Circle, OrientedRect, Pose2, point_shape_distance
from dynagrasp.meta import (
    ACTION_HI,
    ACTION_LO,
    EpisodeRollout,
    IterationContext,
    MetaController,
    MetaPolicy,
    PPOConfig,
    PrevActions,
    act,
    featurize,
    frame_dim,
    gae,
    load_policy,
    make_policy,
    ppo_loss,
    ppo_update,
    save_policy,
    stack_frames,
)
from dynagrasp.predictor import HistoryBuffer


def _ctx(observed, prev=None, predicted=None):
    model = ArmModel()
    q = np.array([0.2, -0.4, 0.5, 0.1])
    buf = HistoryBuffer()
    for i in range(20):
        buf.push(Pose2(0.4 + 0.002 * i, 0.2, 0.1), i / 16)
    return IterationContext(
        q=q,
        ee=ee_pose(model, q),
        buffer=buf,
        obs_pose=buf.last_world_pose,
        obj_dims=(0.06, 0.1),
        observed_obstacles=observed,
        prev=prev or PrevActions(),
        predicted_prev=predicted,
        model=model,
        predictor=None,
        packed_obstacles=None,
        cost=None,
        rng=np.random.default_rng(0),
    )


def test_feature_dimension_constant():
    obs_sets = [
        [],
        [Circle((0.3, 0.3), 0.05)],
        [OrientedRect(Pose2(0.1, 0.5, 0.2), 0.05, 0.07) for _ in range(8)],
    ]
    dims = {len(featurize(_ctx(o))) for o in obs_sets}
    assert dims == {frame_dim(4)}


def test_two_obstacles_pad_remaining_slots():
    obs = [OrientedRect(Pose2(0.5, 0.0, 0.0), 0.05, 0.05),
           OrientedRect(Pose2(0.0, 0.5, 0.3), 0.04, 0.06)]
    f = featurize(_ctx(obs))
    base = 4 + 3 + 13
    flags = [f[base + 6 * k + 5] for k in range(5)]
    assert flags == [1.0, 1.0, 0.0, 0.0, 0.0]
    for k in (2, 3, 4):
        assert np.all(f[base + 6 * k : base + 6 * (k + 1)] == 0.0)


def test_iteration_zero_prev_block_is_zero():
    f = featurize(_ctx([]))
    n = 4
    prev_block = f[-(10 + n):]
    assert np.all(prev_block == 0.0)


def test_obstacle_ordering_matches_bruteforce_sort():
    rng = np.random.default_rng(3)
    for _ in range(20):
        obs = []
        for _ in range(7):
            if rng.random() < 0.5:
                obs.append(Circle(tuple(rng.uniform(-1, 1, 2)), rng.uniform(0.02, 0.1)))
            else:
                obs.append(OrientedRect(Pose2(*rng.uniform(-1, 1, 2), rng.uniform(-3, 3)),
                                        rng.uniform(0.02, 0.1), rng.uniform(0.02, 0.1)))
        ctx = _ctx(obs)
        f = featurize(ctx)
        ee = (ctx.ee.x, ctx.ee.y)
        order = sorted(range(7), key=lambda i: (point_shape_distance(ee, obs[i]), i))
        base = 4 + 3 + 13
        for slot in range(5):
            ob = obs[order[slot]]
            x = ob.pose.x if isinstance(ob, OrientedRect) else ob.center[0]
            assert f[base + 6 * slot] == x


def test_featurize_rejects_non_finite():
    ctx = _ctx([])
    ctx.obj_dims = (math.nan, 0.1)
    with pytest.raises(ValueError):
        featurize(ctx)


def test_stack_frames_padding():
    fd = frame_dim(4)
    frames = [np.full(fd, i + 1.0) for i in range(3)]
    s = stack_frames(frames, 4)
    assert s.shape == (5, fd)
    assert np.all(s[0] == 0) and np.all(s[1] == 0)
    assert np.all(s[2] == 1.0) and np.all(s[4] == 3.0)


def test_act_zero_std_is_squashed_mean():
    policy = make_policy(4, np.random.default_rng(0))
    s = np.random.default_rng(1).normal(size=(5, frame_dim(4)))
    a1, pre1, logp, _ = act(policy, s, 0.0, np.random.default_rng(2))
    a2, _, _, _ = act(policy, s, 0.0, np.random.default_rng(99))
    assert (a1.T_L, a1.T_T) == (a2.T_L, a2.T_T)
    assert logp == 0.0
    assert ACTION_LO[0] < a1.T_L < ACTION_HI[0]
    assert ACTION_LO[1] < a1.T_T < ACTION_HI[1]


def test_act_bounds_always():
    policy = make_policy(4, np.random.default_rng(0))
    rng = np.random.default_rng(5)
    for _ in range(300):
        s = rng.normal(size=(5, frame_dim(4))) * 3
        a, _, _, _ = act(policy, s, rng.uniform(0, 2.0), rng)
        assert 0.0 <= a.T_L <= 8.0
        assert 0.0 <= a.T_T <= 4.0


def test_act_sample_mean_near_squashed_mean():
    policy = make_policy(4, np.random.default_rng(0))
    s = np.random.default_rng(1).normal(size=(5, frame_dim(4)))
    _, mean_pre, _, _ = act(policy, s, 0.0, np.random.default_rng(0))
    rng = np.random.default_rng(7)
    std = 0.5
    n = 20_000
    samples = np.array([act(policy, s, std, rng)[1] for _ in range(n)])
    se = std / math.sqrt(n)
    assert np.all(np.abs(samples.mean(axis=0) - mean_pre) < 4 * se)


def test_gae_pure_discounting():
    gamma = 0.95
    k = 7
    rewards = np.zeros(k + 1)
    rewards[-1] = 1.0
    values = np.zeros(k + 1)
    adv, ret = gae(rewards, values, gamma, lam=1.0)
    for j in range(k + 1):
        assert ret[j] == pytest.approx(gamma ** (k - j), abs=1e-12)


def test_ppo_zero_advantage_keeps_parameters():
    policy = make_policy(4, np.random.default_rng(0))
    before = [p.copy() for p in policy.parameters()]
    T = 6
    states = np.random.default_rng(1).normal(size=(T, 5, frame_dim(4)))
    from dynagrasp.meta import _policy_forward

    mean, values, _ = _policy_forward(policy, states)
    rollout = EpisodeRollout(
        states=states,
        pre_actions=mean.copy(),
        log_probs=np.full(T, -1.0),
        values=np.zeros(T),
        rewards=np.zeros(T),
        std=0.5,
    )
    actor_before = [p.copy() for p in policy.actor.parameters()]
    critic_before = [p.copy() for p in policy.critic.parameters()]
    cfg = PPOConfig(epochs_per_batch=2)
    ppo_update(policy, [rollout], cfg, nn.AdamState(lr=cfg.lr), np.random.default_rng(2))
    # zero advantages silence the surrogate: only value-loss paths may move
    for p, b in zip(policy.actor.parameters(), actor_before):
        assert np.array_equal(p, b)
    assert any(not np.array_equal(p, b) for p, b in zip(policy.critic.parameters(), critic_before))
    del before


def test_ppo_rejects_bad_reward_sum():
    policy = make_policy(4, np.random.default_rng(0))
    T = 3
    rollout = EpisodeRollout(
        states=np.zeros((T, 5, frame_dim(4))),
        pre_actions=np.ones((T, 2)),
        log_probs=np.zeros(T),
        values=np.zeros(T),
        rewards=np.array([0.0, 1.0, 1.0]),
        std=0.5,
    )
    with pytest.raises(ValueError):
        ppo_update(policy, [rollout], PPOConfig(), nn.AdamState(), np.random.default_rng(0))


def _mini_policy(rng):
    fd = 6
    return MetaPolicy(
        frame_encoder=nn.make_net((fd, 8), ("tanh",), rng),
        trunk=nn.make_net((40, 8), ("tanh",), rng),
        actor=nn.make_net((8, 2), ("identity",), rng),
        critic=nn.make_net((8, 1), ("identity",), rng),
        norm_mu=np.zeros(fd),
        norm_sd=np.ones(fd),
    )


def test_ppo_loss_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    policy = _mini_policy(rng)
    B = 4
    states = rng.normal(size=(B, 5, 6))
    pre = rng.uniform([0, 0], [8, 4], size=(B, 2))
    old_logp = rng.normal(-2.0, 0.3, size=B)
    adv = rng.normal(size=B)
    ret = rng.normal(size=B)
    std = 0.7
    cfg = PPOConfig()

    _, grads, _ = ppo_loss(policy, states, pre, old_logp, adv, ret, std, cfg)
    params = policy.parameters()
    h = 1e-6
    checked = 0
    for p, g in zip(params, grads):
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + h
            lp, _, _ = ppo_loss(policy, states, pre, old_logp, adv, ret, std, cfg)
            p[idx] = orig - h
            lm, _, _ = ppo_loss(policy, states, pre, old_logp, adv, ret, std, cfg)
            p[idx] = orig
            fd = (lp - lm) / (2 * h)
            denom = max(abs(fd), abs(g[idx]), 1e-7)
            assert abs(fd - g[idx]) / denom < 1e-4, (idx, fd, g[idx])
            checked += 1
    assert checked > 100


def test_std_schedule():
    cfg = PPOConfig()
    assert cfg.std_at(0) == 1.0
    assert cfg.std_at(4999) == 1.0
    assert cfg.std_at(5000) == pytest.approx(0.95)
    assert cfg.std_at(10_000) == pytest.approx(0.90)
    assert cfg.std_at(10_000_000) == pytest.approx(0.05)


def test_policy_roundtrip(tmp_path):
    policy = make_policy(4, np.random.default_rng(0))
    policy.norm_mu[:] = np.random.default_rng(1).normal(size=len(policy.norm_mu))
    prefix = str(tmp_path / "ckpt")
    save_policy(policy, prefix, episodes=123, std=0.4)
    loaded = load_policy(prefix)
    s = np.random.default_rng(2).normal(size=(5, frame_dim(4)))
    a1, p1, l1, v1 = act(policy, s, 0.0, np.random.default_rng(3))
    a2, p2, l2, v2 = act(loaded, s, 0.0, np.random.default_rng(3))
    assert a1 == a2 and v1 == v2


def test_controller_records_rollout():
    policy = make_policy(4, np.random.default_rng(0))
    ctrl = MetaController(policy, std=0.3, record=True)
    ctrl.begin_episode()
    rng = np.random.default_rng(1)
    for _ in range(4):
        ctx = _ctx([])
        ctx.stacked = rng.normal(size=(5, frame_dim(4)))
        ctx.rng = rng
        action, charged = ctrl.decide(ctx)
        assert charged == 0.0
    r = ctrl.take_rollout(success=True)
    assert r.states.shape == (4, 5, frame_dim(4))
    assert r.rewards.sum() == 1.0 and r.rewards[-1] == 1.0
    assert r.pre_actions.shape == (4, 2)
