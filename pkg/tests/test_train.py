"""Decoupled training loop tests: upper pass-through, checkpoints, determinism."""

import numpy as np
import pytest

from signmotion.model import default_robot_model
from signmotion.ppo import PpoConfig
from signmotion.sim_env import EnvConfig, RandomizationConfig
from signmotion.synthetic import synthetic_trajectory
from signmotion.train import (
    DecoupledRunner,
    TrainConfig,
    train,
    upper_policy,
)


@pytest.fixture(scope="module")
def model():
    return default_robot_model()


@pytest.fixture(scope="module")
def clips(model):
    return [synthetic_trajectory(model, seed=s, num_frames=40, fps=30.0,
                                 amplitude=0.15) for s in (0, 1)]


def tiny_config(**kw):
    defaults = dict(
        num_envs=2,
        iterations=2,
        checkpoint_every=0,
        ppo=PpoConfig(rollout_length=8, epochs=1, minibatches=1,
                      hidden=(16, 16)),
        env=EnvConfig(history_len=0, reset_noise=0.0,
                      randomization=RandomizationConfig(enabled=False)),
    )
    defaults.update(kw)
    return TrainConfig(**defaults)


class FakeRef:
    def __init__(self, dof_pos):
        self.dof_pos = dof_pos


def test_upper_policy_is_passthrough():
    ref = FakeRef(np.arange(10.0))
    idx = [2, 5, 7]
    out = upper_policy(ref, idx)
    assert np.array_equal(out, [2.0, 5.0, 7.0])


def test_upper_policy_smoothing_one_pole():
    ref = FakeRef(np.full(4, 1.0))
    prev = np.zeros(2)
    out = upper_policy(ref, [0, 1], prev=prev, smoothing=0.25)
    assert np.allclose(out, 0.25)
    # smoothing with no previous value starts at the reference
    out0 = upper_policy(ref, [0, 1], prev=None, smoothing=0.25)
    assert np.allclose(out0, 1.0)


def test_upper_policy_missing_reference():
    with pytest.raises(ValueError):
        upper_policy(None, [0])


def test_assemble_action_layout(model, clips):
    runner = DecoupledRunner(model, clips, tiny_config(), seed=0)
    a_low = np.linspace(-0.5, 0.5, runner.act_dim)
    a = runner.assemble_action(0, a_low)
    assert a.shape == (model.num_dofs,)
    assert np.array_equal(a[runner.lower], a_low)
    env = runner.envs[0]
    ref = env.reference_frame()
    expect = (ref.dof_pos[runner.upper]
              - runner.default_pose[runner.upper]) / env.cfg.action_scale
    assert np.allclose(a[runner.upper], expect, atol=1e-12)


def test_runner_requires_clips(model):
    with pytest.raises(ValueError):
        DecoupledRunner(model, [], tiny_config(), seed=0)


def test_collect_buffer_shapes(model, clips):
    cfg = tiny_config()
    runner = DecoupledRunner(model, clips, cfg, seed=0)
    buf = runner.collect()
    n = cfg.num_envs * cfg.ppo.rollout_length
    assert buf.obs.shape == (n, runner.obs_dim)
    assert buf.actions.shape == (n, runner.act_dim)
    assert buf.advantages.shape == (n,)
    assert np.all(np.isfinite(buf.returns))


def test_checkpoint_round_trip(model, clips, tmp_path):
    cfg = tiny_config()
    runner = DecoupledRunner(model, clips, cfg, seed=0)
    runner.train_iteration()
    p = tmp_path / "ck.npz"
    runner.save_checkpoint(p)

    other = DecoupledRunner(model, clips, cfg, seed=99)
    other.load_checkpoint(p)
    assert np.array_equal(other.policy.net.flat_params(),
                          runner.policy.net.flat_params())
    assert np.array_equal(other.policy.log_std, runner.policy.log_std)
    assert np.array_equal(other.value_net.net.flat_params(),
                          runner.value_net.net.flat_params())
    obs = np.random.default_rng(0).standard_normal(runner.obs_dim)
    assert np.array_equal(runner.obs_norm.normalize(obs),
                          other.obs_norm.normalize(obs))


def test_train_deterministic_given_seed(model, clips, tmp_path):
    def run():
        _, rows = train(model, clips, tiny_config(), seed=123)
        return rows

    a, b = run(), run()
    assert len(a) == len(b) == 2
    for ra, rb in zip(a, b):
        for k in ra:
            assert ra[k] == rb[k], k


def test_train_writes_curve_and_checkpoint(model, clips, tmp_path):
    out = tmp_path / "run"
    out.mkdir()
    _, rows = train(model, clips, tiny_config(), seed=1, out_dir=str(out))
    assert (out / "checkpoint.npz").exists()
    text = (out / "curve.csv").read_text().splitlines()
    assert text[0].startswith("iteration,mean_return")
    assert len(text) == 1 + len(rows)


def test_evaluate_returns_per_episode_records(model, clips):
    runner = DecoupledRunner(model, clips, tiny_config(), seed=0)
    res = runner.evaluate(episodes=2, seed=0)
    assert len(res) == 2
    for r in res:
        assert set(r) == {"return", "length", "dof_mse", "fell"}
        assert r["length"] > 0
        assert r["dof_mse"] >= 0.0


def test_recent_episode_stats_empty(model, clips):
    runner = DecoupledRunner(model, clips, tiny_config(), seed=0)
    stats = runner.recent_episode_stats()
    assert stats["episodes"] == 0
    assert stats["fall_rate"] == 0.0
