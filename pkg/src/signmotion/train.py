"""Decoupled upper/lower training orchestration.

The upper body imitates the retargeted reference directly: the minimizer of
any f-divergence against a Dirac is the Dirac's atom, so the upper "policy"
is a pass-through of the reference DoFs (optionally one-pole smoothed).  The
lower body is a learned Gaussian policy trained with PPO to keep the robot
balanced while the upper body performs the sign motion.
"""

from __future__ import annotations

import csv
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .nets import GaussianPolicy, RunningMeanStd, ValueNet
from .ppo import PpoConfig, PpoUpdater, RolloutBuffer
from .sim_env import (
    EnvConfig,
    SignTrackingEnv,
    default_standing_pose,
    lower_observation_indices,
    observation_dim,
)


@dataclass
class TrainConfig:
    num_envs: int = 16
    iterations: int = 300
    checkpoint_every: int = 100
    smoothing: float = 0.0  # one-pole filter on upper targets; 0 = off
    lower_obs: str = "compact"  # "compact" leg slice or "full" observation
    log_every: int = 10
    ppo: PpoConfig = field(default_factory=PpoConfig)
    env: EnvConfig = field(default_factory=EnvConfig)


def upper_policy(reference_frame, upper_indices, prev=None, smoothing=0.0):
    """Upper-body targets (rad): the retargeted reference, optionally smoothed.

    With smoothing alpha in (0, 1]:  out = prev + alpha * (ref - prev).
    """
    if reference_frame is None:
        raise ValueError("missing reference frame")
    target = np.asarray(reference_frame.dof_pos, dtype=float)[
        np.asarray(upper_indices, dtype=int)]
    if smoothing <= 0.0 or prev is None:
        return target
    return prev + smoothing * (target - prev)


class DecoupledRunner:
    """Vectorized-by-loop set of envs sharing one lower-body policy."""

    def __init__(self, model, clips, train_cfg, seed):
        if not clips:
            raise ValueError("need at least one reference clip")
        self.model = model
        self.clips = clips
        self.cfg = train_cfg
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        if train_cfg.lower_obs == "compact":
            self.obs_idx = lower_observation_indices(model)
            self.obs_dim = len(self.obs_idx)
        elif train_cfg.lower_obs == "full":
            self.obs_idx = None
            self.obs_dim = observation_dim(train_cfg.env.history_len)
        else:
            raise ValueError(f"unknown lower_obs mode {train_cfg.lower_obs!r}")
        self.act_dim = len(model.lower_indices)
        net_rng = np.random.default_rng(seed + 1)
        self.policy = GaussianPolicy(self.obs_dim, self.act_dim,
                                     hidden=train_cfg.ppo.hidden, rng=net_rng)
        self.value_net = ValueNet(self.obs_dim, hidden=train_cfg.ppo.hidden,
                                  rng=np.random.default_rng(seed + 2))
        self.updater = PpoUpdater(self.policy, self.value_net, train_cfg.ppo)
        self.obs_norm = RunningMeanStd(self.obs_dim)
        self.rew_norm = RunningMeanStd(())
        self.default_pose = default_standing_pose(model)
        self.upper = np.asarray(model.upper_indices, dtype=int)
        self.lower = np.asarray(model.lower_indices, dtype=int)

        self.envs = []
        self._obs = []
        self._upper_prev = []
        self._ep_return = []
        self._ep_len = []
        self.completed = []  # (return, length, fell, dof_mse)
        self._ep_sq = []
        self._ret_acc = []  # running discounted return per env
        for i in range(train_cfg.num_envs):
            env = SignTrackingEnv(model, train_cfg.env)
            self.envs.append(env)
            self._reset_env(i, first=True)

    def _reset_env(self, i, first=False):
        clip = self.clips[int(self.rng.integers(len(self.clips)))]
        seed = int(self.rng.integers(2 ** 31))
        obs = self.envs[i].reset(clip, seed=seed)
        if first:
            self._obs.append(obs)
            self._upper_prev.append(None)
            self._ep_return.append(0.0)
            self._ep_len.append(0)
            self._ep_sq.append(0.0)
            self._ret_acc.append(0.0)
        else:
            self._obs[i] = obs
            self._upper_prev[i] = None
            self._ep_return[i] = 0.0
            self._ep_len[i] = 0
            self._ep_sq[i] = 0.0

    def _vec(self, obs):
        v = obs.vector()
        return v if self.obs_idx is None else v[self.obs_idx]

    def assemble_action(self, env_i, a_low):
        """Whole-body normalized action: learned legs + pass-through upper."""
        env = self.envs[env_i]
        ref = env.reference_frame()
        up = upper_policy(ref, self.upper, self._upper_prev[env_i],
                          self.cfg.smoothing)
        if self.cfg.smoothing > 0.0:
            self._upper_prev[env_i] = up
        a = np.zeros(self.model.num_dofs)
        a[self.lower] = a_low
        a[self.upper] = (up - self.default_pose[self.upper]) \
            / env.cfg.action_scale
        return a

    def collect(self):
        """One rollout of cfg.ppo.rollout_length steps from every env."""
        T = self.cfg.ppo.rollout_length
        buffers = [RolloutBuffer() for _ in self.envs]
        for _ in range(T):
            obs_batch = np.array([self._vec(o) for o in self._obs])
            self.obs_norm.update(obs_batch)
            norm = self.obs_norm.normalize(obs_batch)
            actions, log_probs = self.policy.sample(norm, self.rng)
            values = self.value_net.value(norm)
            for i, env in enumerate(self.envs):
                a = self.assemble_action(i, actions[i])
                obs, reward, done, info = env.step(a)
                self._ep_return[i] += reward
                self._ep_len[i] += 1
                ref = env.reference_frame()
                self._ep_sq[i] += float(np.mean(
                    (ref.dof_pos - env.state.q) ** 2))
                # scale rewards by the std of the running discounted return
                # so value targets stay O(10) regardless of episode length
                self._ret_acc[i] = self._ret_acc[i] * self.cfg.ppo.gamma \
                    + reward
                self.rew_norm.update([self._ret_acc[i]])
                r = float(self.rew_norm.scale(reward)) \
                    if self.cfg.ppo.reward_normalization else reward
                if done:
                    self._ret_acc[i] = 0.0
                    if not info["fallen"]:
                        # clip ran out rather than a fall; bootstrap the
                        # terminal state so survival is not penalized
                        term = self.obs_norm.normalize(
                            np.atleast_2d(self._vec(obs)))
                        r += self.cfg.ppo.gamma \
                            * float(self.value_net.value(term)[0])
                buffers[i].add(norm[i], actions[i], log_probs[i], values[i],
                               r, done)
                if done:
                    self.completed.append((
                        self._ep_return[i], self._ep_len[i],
                        bool(info["fallen"]),
                        self._ep_sq[i] / max(1, self._ep_len[i])))
                    self._reset_env(i)
                else:
                    self._obs[i] = obs
        merged = RolloutBuffer()
        obs_batch = np.array([self._vec(o) for o in self._obs])
        norm = self.obs_norm.normalize(obs_batch)
        last_values = self.value_net.value(norm)
        parts = []
        for i, b in enumerate(buffers):
            b.finalize(last_values[i], self.cfg.ppo.gamma,
                       self.cfg.ppo.gae_lambda)
            parts.append(b)
        merged.obs = np.concatenate([b.obs for b in parts])
        merged.actions = np.concatenate([b.actions for b in parts])
        merged.log_probs = np.concatenate([b.log_probs for b in parts])
        merged.advantages = np.concatenate([b.advantages for b in parts])
        merged.returns = np.concatenate([b.returns for b in parts])
        return merged

    def train_iteration(self):
        buffer = self.collect()
        stats = self.updater.update(buffer, self.rng)
        return stats

    def recent_episode_stats(self, window=50):
        eps = self.completed[-window:]
        if not eps:
            return {"mean_return": 0.0, "mean_length": 0.0,
                    "fall_rate": 0.0, "dof_mse": 0.0, "episodes": 0}
        rets, lens, fells, mses = zip(*eps)
        return {
            "mean_return": float(np.mean(rets)),
            "mean_length": float(np.mean(lens)),
            "fall_rate": float(np.mean(fells)),
            "dof_mse": float(np.mean(mses)),
            "episodes": len(eps),
        }

    # -- evaluation --------------------------------------------------------

    def evaluate(self, episodes=10, seed=0, deterministic=True,
                 horizon="episode"):
        """Roll full episodes with the current policy; no learning.

        With horizon "episode" the DoF MSE averages over the steps the
        robot was up.  With horizon "clip" a fall does not end the metric:
        the remaining reference frames accrue error against the pose the
        robot fell in, so falling early shows up as a large tracking error
        over the whole clip rather than a short clean episode.
        """
        if horizon not in ("episode", "clip"):
            raise ValueError(f"unknown evaluation horizon {horizon!r}")
        rng = np.random.default_rng(seed)
        env = SignTrackingEnv(self.model, self.cfg.env)
        results = []
        for ep in range(episodes):
            clip = self.clips[ep % len(self.clips)]
            obs = env.reset(clip, seed=int(rng.integers(2 ** 31)),
                            start_frame=0)
            upper_prev = None
            total, steps, sq, fell = 0.0, 0, 0.0, False
            done = False
            while not done:
                vec = self.obs_norm.normalize(self._vec(obs))
                if deterministic:
                    a_low = self.policy.mean(vec)[0]
                else:
                    a_low, _ = self.policy.sample(vec[None, :], rng)
                    a_low = a_low[0]
                ref = env.reference_frame()
                up = upper_policy(ref, self.upper, upper_prev,
                                  self.cfg.smoothing)
                if self.cfg.smoothing > 0.0:
                    upper_prev = up
                a = np.zeros(self.model.num_dofs)
                a[self.lower] = a_low
                a[self.upper] = (up - self.default_pose[self.upper]) \
                    / env.cfg.action_scale
                obs, reward, done, info = env.step(a)
                total += reward
                steps += 1
                sq += float(np.mean((env.reference_frame().dof_pos
                                     - env.state.q) ** 2))
                fell = fell or info["fallen"]
            if horizon == "clip" and fell:
                dt_ctrl = env.cfg.dt * env.cfg.decimation
                t, q_frozen = env.t, env.state.q
                last = clip.num_frames - 1
                while env.cursor0 + int(round(t * clip.fps)) < last:
                    t += dt_ctrl
                    k = min(env.cursor0 + int(round(t * clip.fps)), last)
                    sq += float(np.mean(
                        (clip.frames[k].dof_pos - q_frozen) ** 2))
                    steps += 1
            results.append({"return": total, "length": steps,
                            "dof_mse": sq / max(1, steps), "fell": fell})
        return results

    # -- persistence -------------------------------------------------------

    def save_checkpoint(self, path):
        """Atomic write: temp file in the same directory, then rename."""
        w, b = self.policy.net.get_params()
        vw, vb = self.value_net.net.get_params()
        payload = {"version": np.array(1), "log_std": self.policy.log_std}
        for i, arr in enumerate(w):
            payload[f"pw{i}"] = arr
        for i, arr in enumerate(b):
            payload[f"pb{i}"] = arr
        for i, arr in enumerate(vw):
            payload[f"vw{i}"] = arr
        for i, arr in enumerate(vb):
            payload[f"vb{i}"] = arr
        payload["obs_mean"] = self.obs_norm.mean
        payload["obs_var"] = self.obs_norm.var
        payload["obs_count"] = np.array(self.obs_norm.count)
        payload["rew_var"] = np.atleast_1d(self.rew_norm.var)
        payload["rew_count"] = np.array(self.rew_norm.count)
        d = os.path.dirname(os.path.abspath(path)) or "."
        fd, tmp = tempfile.mkstemp(dir=d, suffix=".npz.tmp")
        os.close(fd)
        try:
            with open(tmp, "wb") as fh:
                np.savez(fh, **payload)
            os.replace(tmp, path)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)

    def load_checkpoint(self, path):
        data = np.load(path)
        n = len(self.policy.net.weights)
        self.policy.net.set_params([data[f"pw{i}"] for i in range(n)],
                                   [data[f"pb{i}"] for i in range(n)])
        self.policy.log_std = data["log_std"].copy()
        m = len(self.value_net.net.weights)
        self.value_net.net.set_params([data[f"vw{i}"] for i in range(m)],
                                      [data[f"vb{i}"] for i in range(m)])
        self.obs_norm.load_state_dict({"mean": data["obs_mean"],
                                       "var": data["obs_var"],
                                       "count": data["obs_count"]})
        self.rew_norm.var = float(data["rew_var"][0])
        self.rew_norm.count = float(data["rew_count"])


def train(model, clips, train_cfg, seed, out_dir=None, curve_path=None):
    """Full training run; returns (runner, learning-curve rows)."""
    runner = DecoupledRunner(model, clips, train_cfg, seed)
    rows = []
    for it in range(train_cfg.iterations):
        stats = runner.train_iteration()
        ep = runner.recent_episode_stats()
        rows.append({
            "iteration": it,
            "mean_return": ep["mean_return"],
            "mean_length": ep["mean_length"],
            "fall_rate": ep["fall_rate"],
            "dof_mse": ep["dof_mse"],
            **{k: stats[k] for k in ("loss", "value_loss", "entropy", "kl",
                                     "clip_fraction")},
        })
        if out_dir and train_cfg.checkpoint_every and \
                (it + 1) % train_cfg.checkpoint_every == 0:
            runner.save_checkpoint(os.path.join(out_dir, "checkpoint.npz"))
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        runner.save_checkpoint(os.path.join(out_dir, "checkpoint.npz"))
        curve_path = curve_path or os.path.join(out_dir, "curve.csv")
    if curve_path and rows:
        with open(curve_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
    return runner, rows
