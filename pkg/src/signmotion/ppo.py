"""Clipped PPO with an optional KL penalty, plus GAE.

The surrogate maximized per minibatch is

    min(rho * A, clip(rho, 1 +- eps) * A) + alpha * H(pi)
    - eta * KL(pi_old || pi) - c_v * value loss

with rho the likelihood ratio.  Gradients flow by manual reverse-mode through
the dense layers (see nets.Mlp).  Clipping can be disabled for pure-KL mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nets import Adam


@dataclass
class PpoConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    rollout_length: int = 21
    epochs: int = 5
    minibatches: int = 4
    entropy_coef: float = 0.01
    value_coef: float = 1.0
    clip_range: float = 0.2
    kl_coef: float = 0.0  # eta; > 0 adds the KL penalty
    use_clip: bool = True
    learning_rate: float = 1e-3
    reward_normalization: bool = True
    seeds: tuple = (123, 321, 1)
    hidden: tuple = (512, 256, 128)
    max_grad_norm: float = 1.0

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in cls.__dataclass_fields__.values()}
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise KeyError(f"unknown ppo config keys: {sorted(unknown)}")
        d = dict(d)
        for k in ("seeds", "hidden"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass
class RolloutBuffer:
    obs: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    log_probs: list = field(default_factory=list)
    values: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    dones: list = field(default_factory=list)
    advantages: np.ndarray = None
    returns: np.ndarray = None

    def add(self, obs, action, log_prob, value, reward, done):
        self.obs.append(obs)
        self.actions.append(action)
        self.log_probs.append(log_prob)
        self.values.append(value)
        self.rewards.append(reward)
        self.dones.append(done)

    def __len__(self):
        return len(self.obs)

    def finalize(self, last_value, gamma, lam):
        rewards = np.asarray(self.rewards, dtype=float)
        values = np.asarray(self.values, dtype=float)
        dones = np.asarray(self.dones, dtype=float)
        adv, ret = gae(rewards, values, dones, gamma, lam, last_value)
        self.advantages = adv
        self.returns = ret
        self.obs = np.asarray(self.obs, dtype=float)
        self.actions = np.asarray(self.actions, dtype=float)
        self.log_probs = np.asarray(self.log_probs, dtype=float)


def gae(rewards, values, dones, gamma, lam, last_value=0.0):
    """Reverse-recursion generalized advantage estimation.

    done[t] marks that the episode ended at step t (no bootstrap across it).
    Returns (advantages, returns) with returns = advantages + values.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    if not (len(rewards) == len(values) == len(dones)):
        raise ValueError("gae inputs must share length")
    T = len(rewards)
    adv = np.zeros(T)
    next_adv = 0.0
    for t in reversed(range(T)):
        next_value = last_value if t == T - 1 else values[t + 1]
        not_done = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * not_done - values[t]
        next_adv = delta + gamma * lam * not_done * next_adv
        adv[t] = next_adv
    return adv, adv + values


def ppo_loss_and_grads(policy, value_net, obs, actions, old_log_probs,
                       old_mu, old_log_std, advantages, returns, cfg):
    """Minibatch loss (to minimize) and gradients for all parameters."""
    B = len(obs)
    mu = policy.mean(obs)
    std = np.exp(policy.log_std)
    var = std ** 2
    z = (actions - mu) / std
    log_probs = -0.5 * np.sum(z * z + np.log(2 * np.pi), axis=-1) \
        - np.sum(policy.log_std)
    ratio = np.exp(log_probs - old_log_probs)

    # clipped surrogate: choose per-sample which branch is active
    if cfg.use_clip:
        clipped = np.clip(ratio, 1.0 - cfg.clip_range, 1.0 + cfg.clip_range)
        surr1 = ratio * advantages
        surr2 = clipped * advantages
        take_unclipped = surr1 <= surr2
        # d surrogate / d log_prob = ratio * A on the active unclipped branch
        dsurr_dlogp = np.where(take_unclipped, ratio * advantages, 0.0)
        policy_obj = np.minimum(surr1, surr2)
        clip_fraction = float(np.mean(~take_unclipped))
    else:
        dsurr_dlogp = ratio * advantages
        policy_obj = ratio * advantages
        clip_fraction = 0.0

    kl = policy.kl_against(old_mu, old_log_std, mu)
    entropy = policy.entropy()

    # gradients of log_prob wrt mu and log_std
    dlogp_dmu = z / std  # (B, A)
    # loss = -(mean surrogate) - alpha*entropy + eta*mean KL
    g_mu = -(dsurr_dlogp[:, None] * dlogp_dmu) / B
    if cfg.kl_coef > 0.0:
        # d KL / d mu = (mu - old_mu) / var_new
        g_mu += cfg.kl_coef * (mu - old_mu) / var / B
    gw_pi, gb_pi, _ = policy.net.backward(g_mu)

    # log-std gradient: d logp / d log_std = z^2 - 1 per dim
    g_logstd = -np.sum(dsurr_dlogp[:, None] * (z * z - 1.0), axis=0) / B
    g_logstd -= cfg.entropy_coef  # d entropy / d log_std = 1 per dim
    if cfg.kl_coef > 0.0:
        var_old = np.exp(2.0 * old_log_std)
        dkl_dls = 1.0 - (var_old + (mu - old_mu) ** 2) / var
        g_logstd += cfg.kl_coef * np.mean(dkl_dls, axis=0)

    values = value_net.net.forward(obs)[:, 0]
    v_err = values - returns
    value_loss = float(np.mean(v_err ** 2))
    g_v = (cfg.value_coef * 2.0 * v_err / B)[:, None]
    gw_v, gb_v, _ = value_net.net.backward(g_v)

    loss = float(-np.mean(policy_obj) - cfg.entropy_coef * entropy
                 + cfg.kl_coef * np.mean(kl) + cfg.value_coef * value_loss)
    stats = {
        "loss": loss,
        "policy_loss": float(-np.mean(policy_obj)),
        "value_loss": value_loss,
        "entropy": entropy,
        "kl": float(np.mean(kl)),
        "clip_fraction": clip_fraction,
    }
    grads = {
        "policy": gw_pi + gb_pi + [g_logstd],
        "value": gw_v + gb_v,
    }
    return loss, grads, stats


class PpoUpdater:
    def __init__(self, policy, value_net, cfg):
        self.policy = policy
        self.value_net = value_net
        self.cfg = cfg
        self.opt_pi = Adam(policy.parameters(), lr=cfg.learning_rate)
        self.opt_v = Adam(value_net.parameters(), lr=cfg.learning_rate)

    def update(self, buffer, rng):
        """Run epochs x minibatches of gradient steps over the buffer."""
        cfg = self.cfg
        N = len(buffer.obs)
        old_mu = self.policy.mean(buffer.obs)
        old_log_std = self.policy.log_std.copy()
        all_stats = []
        for _ in range(cfg.epochs):
            perm = rng.permutation(N)
            for mb in np.array_split(perm, cfg.minibatches):
                if len(mb) == 0:
                    continue
                adv = buffer.advantages[mb]
                adv = (adv - adv.mean()) / (adv.std() + 1e-8)
                loss, grads, stats = ppo_loss_and_grads(
                    self.policy, self.value_net,
                    buffer.obs[mb], buffer.actions[mb],
                    buffer.log_probs[mb], old_mu[mb], old_log_std,
                    adv, buffer.returns[mb], cfg)
                if not np.isfinite(loss):
                    raise FloatingPointError(
                        f"non-finite PPO loss: {stats}")
                self.opt_pi.step(_clip_grads(grads["policy"],
                                             cfg.max_grad_norm))
                self.opt_v.step(_clip_grads(grads["value"],
                                            cfg.max_grad_norm))
                all_stats.append(stats)
        keys = all_stats[0].keys()
        return {k: float(np.mean([s[k] for s in all_stats])) for k in keys}


def _clip_grads(grads, max_norm):
    if max_norm is None or max_norm <= 0:
        return grads
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        grads = [g * scale for g in grads]
    return grads
