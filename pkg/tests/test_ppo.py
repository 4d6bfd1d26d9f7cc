"""PPO machinery tests: GAE brute force, gradient checks, update behavior."""

import numpy as np
import pytest

from signmotion.nets import GaussianPolicy, ValueNet
from signmotion.ppo import (
    PpoConfig,
    PpoUpdater,
    RolloutBuffer,
    gae,
    ppo_loss_and_grads,
)


def gae_brute_force(rewards, values, dones, gamma, lam, last_value):
    """O(T^2) direct sum: A_t = sum_l (gamma lam)^l delta_{t+l}, cut at dones."""
    T = len(rewards)
    deltas = np.empty(T)
    for t in range(T):
        nv = last_value if t == T - 1 else values[t + 1]
        nv = 0.0 if dones[t] else nv
        deltas[t] = rewards[t] + gamma * nv - values[t]
    adv = np.zeros(T)
    for t in range(T):
        coef = 1.0
        for l in range(t, T):
            adv[t] += coef * deltas[l]
            if dones[l]:
                break
            coef *= gamma * lam
    return adv


def test_gae_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(20):
        T = int(rng.integers(3, 40))
        rewards = rng.standard_normal(T)
        values = rng.standard_normal(T)
        dones = rng.uniform(size=T) < 0.2
        last_value = float(rng.standard_normal())
        adv, ret = gae(rewards, values, dones.astype(float), 0.99, 0.95,
                       last_value)
        oracle = gae_brute_force(rewards, values, dones, 0.99, 0.95,
                                 last_value)
        assert np.max(np.abs(adv - oracle)) < 1e-10
        assert np.max(np.abs(ret - (oracle + values))) < 1e-10


def test_gae_single_step():
    adv, ret = gae([1.0], [0.5], [0.0], 0.99, 0.95, 2.0)
    assert np.isclose(adv[0], 1.0 + 0.99 * 2.0 - 0.5)


def test_gae_length_mismatch():
    with pytest.raises(ValueError):
        gae([1.0, 2.0], [0.5], [0.0], 0.99, 0.95)


def small_setup(seed=0, B=12, obs_dim=6, act_dim=3):
    rng = np.random.default_rng(seed)
    policy = GaussianPolicy(obs_dim, act_dim, hidden=(8, 8), rng=rng,
                            log_std_init=-0.2)
    value_net = ValueNet(obs_dim, hidden=(8, 8),
                         rng=np.random.default_rng(seed + 1))
    obs = rng.standard_normal((B, obs_dim))
    actions, log_probs = policy.sample(obs, rng)
    # perturb stored log-probs a bit so ratios differ from 1
    old_log_probs = log_probs + rng.uniform(-0.05, 0.05, B)
    old_mu = policy.mean(obs) + rng.uniform(-0.02, 0.02, (B, act_dim))
    old_log_std = policy.log_std + rng.uniform(-0.02, 0.02, act_dim)
    advantages = rng.standard_normal(B)
    returns = rng.standard_normal(B)
    return policy, value_net, obs, actions, old_log_probs, old_mu, \
        old_log_std, advantages, returns


def fd_check(policy, value_net, args, cfg, tol=1e-4):
    obs, actions, old_log_probs, old_mu, old_log_std, adv, ret = args

    def loss():
        return ppo_loss_and_grads(policy, value_net, obs, actions,
                                  old_log_probs, old_mu, old_log_std,
                                  adv, ret, cfg)[0]

    _, grads, _ = ppo_loss_and_grads(policy, value_net, obs, actions,
                                     old_log_probs, old_mu, old_log_std,
                                     adv, ret, cfg)
    h = 1e-6
    for params, gs in ((policy.parameters(), grads["policy"]),
                       (value_net.parameters(), grads["value"])):
        for p, g in zip(params, gs):
            flat = p.ravel()
            gflat = np.asarray(g).ravel()
            idxs = np.linspace(0, flat.size - 1, min(flat.size, 12),
                               dtype=int)
            for i in idxs:
                old = flat[i]
                flat[i] = old + h
                up = loss()
                flat[i] = old - h
                dn = loss()
                flat[i] = old
                fd = (up - dn) / (2 * h)
                denom = max(abs(fd), abs(gflat[i]), 1e-6)
                assert abs(gflat[i] - fd) / denom < tol, (fd, gflat[i])


def test_policy_gradient_matches_finite_differences_clip():
    policy, value_net, *args = small_setup(seed=1)
    cfg = PpoConfig(entropy_coef=0.01, value_coef=1.0, kl_coef=0.0)
    fd_check(policy, value_net, args, cfg)


def test_policy_gradient_matches_finite_differences_kl():
    policy, value_net, *args = small_setup(seed=2)
    cfg = PpoConfig(entropy_coef=0.01, value_coef=0.5, kl_coef=0.3,
                    use_clip=False)
    fd_check(policy, value_net, args, cfg)


def test_identity_policy_has_unit_ratio():
    """Fresh policy equals old policy: ratio 1, KL 0, clip fraction 0."""
    rng = np.random.default_rng(3)
    policy = GaussianPolicy(4, 2, hidden=(8,), rng=rng)
    value_net = ValueNet(4, hidden=(8,), rng=rng)
    obs = rng.standard_normal((1, 4))
    a, lp = policy.sample(obs, rng)
    mu = policy.mean(obs)
    cfg = PpoConfig()
    _, _, stats = ppo_loss_and_grads(policy, value_net, obs, a, lp, mu,
                                     policy.log_std.copy(),
                                     np.array([1.0]), np.array([0.0]), cfg)
    assert abs(stats["kl"]) < 1e-12
    assert stats["clip_fraction"] == 0.0


def test_kl_mode_matches_unclipped_gradient_at_identity():
    """With clip off and eta > 0, the update direction at pi = pi_old is the
    plain policy gradient (the KL term's gradient vanishes there)."""
    rng = np.random.default_rng(4)
    policy = GaussianPolicy(4, 2, hidden=(8,), rng=rng)
    value_net = ValueNet(4, hidden=(8,), rng=np.random.default_rng(5))
    obs = rng.standard_normal((6, 4))
    a, lp = policy.sample(obs, rng)
    mu = policy.mean(obs)
    ls = policy.log_std.copy()
    adv = rng.standard_normal(6)
    ret = rng.standard_normal(6)
    base = PpoConfig(use_clip=False, kl_coef=0.0, entropy_coef=0.0)
    kl = PpoConfig(use_clip=False, kl_coef=0.7, entropy_coef=0.0)
    _, g0, _ = ppo_loss_and_grads(policy, value_net, obs, a, lp, mu, ls,
                                  adv, ret, base)
    _, g1, _ = ppo_loss_and_grads(policy, value_net, obs, a, lp, mu, ls,
                                  adv, ret, kl)
    for a0, a1 in zip(g0["policy"], g1["policy"]):
        assert np.allclose(a0, a1, atol=1e-10)


def test_clip_fraction_counts_clipped_branch():
    rng = np.random.default_rng(6)
    policy = GaussianPolicy(3, 2, hidden=(4,), rng=rng)
    value_net = ValueNet(3, hidden=(4,), rng=rng)
    obs = rng.standard_normal((4, 3))
    a, lp = policy.sample(obs, rng)
    mu = policy.mean(obs)
    # make stored log-probs far off so every ratio saturates the clip
    lp_off = lp - 1.0  # ratio = e > 1 + 0.2
    adv = np.ones(4)
    cfg = PpoConfig()
    _, _, stats = ppo_loss_and_grads(policy, value_net, obs, a, lp_off, mu,
                                     policy.log_std.copy(), adv,
                                     np.zeros(4), cfg)
    assert stats["clip_fraction"] == 1.0


def test_buffer_finalize_shapes():
    rng = np.random.default_rng(7)
    buf = RolloutBuffer()
    for t in range(5):
        buf.add(rng.standard_normal(3), rng.standard_normal(2), -1.0, 0.1,
                1.0, t == 4)
    buf.finalize(0.0, 0.99, 0.95)
    assert buf.obs.shape == (5, 3)
    assert buf.actions.shape == (5, 2)
    assert buf.advantages.shape == (5,)
    assert np.allclose(buf.returns, buf.advantages + 0.1)


def test_updater_is_deterministic():
    def run(seed):
        rng = np.random.default_rng(seed)
        policy = GaussianPolicy(4, 2, hidden=(8,), rng=np.random.default_rng(0))
        value_net = ValueNet(4, hidden=(8,), rng=np.random.default_rng(1))
        cfg = PpoConfig(epochs=2, minibatches=2)
        upd = PpoUpdater(policy, value_net, cfg)
        buf = RolloutBuffer()
        data_rng = np.random.default_rng(99)
        for t in range(12):
            o = data_rng.standard_normal(4)
            a, lp = policy.sample(o[None, :], data_rng)
            buf.add(o, a[0], lp[0], 0.0, data_rng.standard_normal(), False)
        buf.finalize(0.0, cfg.gamma, cfg.gae_lambda)
        upd.update(buf, np.random.default_rng(5))
        return policy.net.flat_params().copy()

    assert np.array_equal(run(0), run(0))


def test_update_rejects_nonfinite():
    rng = np.random.default_rng(8)
    policy = GaussianPolicy(3, 2, hidden=(4,), rng=rng)
    value_net = ValueNet(3, hidden=(4,), rng=rng)
    cfg = PpoConfig(epochs=1, minibatches=1)
    upd = PpoUpdater(policy, value_net, cfg)
    buf = RolloutBuffer()
    for t in range(4):
        buf.add(rng.standard_normal(3), rng.standard_normal(2), 0.0, 0.0,
                np.nan, False)
    buf.finalize(0.0, cfg.gamma, cfg.gae_lambda)
    with pytest.raises(FloatingPointError):
        upd.update(buf, rng)


def test_config_defaults_and_unknown_keys():
    cfg = PpoConfig()
    assert cfg.gamma == 0.99
    assert cfg.gae_lambda == 0.95
    assert cfg.rollout_length == 21
    assert cfg.epochs == 5
    assert cfg.minibatches == 4
    assert cfg.entropy_coef == 0.01
    assert cfg.value_coef == 1.0
    assert cfg.clip_range == 0.2
    assert cfg.kl_coef == 0.0
    assert cfg.learning_rate == 1e-3
    assert cfg.reward_normalization is True
    assert cfg.seeds == (123, 321, 1)
    with pytest.raises(KeyError):
        PpoConfig.from_dict({"gamma": 0.9, "lr": 1e-4})
