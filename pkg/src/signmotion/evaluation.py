"""Tracking-metric suite, difficulty splitting, and multi-seed aggregation.

All tracking metrics are mean squared errors over an episode; cumulative
reward is the undiscounted sum.  Results aggregate to mean +- population std
over the seed set.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

METRIC_NAMES = ("tracking_dof_pos", "tracking_yaw", "tracking_linvel",
                "tracking_rollpitch", "cumulative_reward")


@dataclass
class EpisodeLog:
    dof_pos: np.ndarray  # (T, n)
    dof_ref: np.ndarray  # (T, n)
    yaw: np.ndarray  # (T,)
    yaw_ref: np.ndarray
    rollpitch: np.ndarray  # (T, 2)
    rollpitch_ref: np.ndarray
    lin_vel: np.ndarray  # (T, 3)
    lin_vel_ref: np.ndarray
    rewards: np.ndarray  # (T,)
    clip_id: str = ""
    seed: int = 0

    def __post_init__(self):
        self.rewards = np.asarray(self.rewards, dtype=float)
        if not np.all(np.isfinite(self.rewards)):
            raise ValueError("rewards contain non-finite values")
        T = len(self.rewards)
        for name in ("dof_pos", "dof_ref", "yaw", "yaw_ref", "rollpitch",
                     "rollpitch_ref", "lin_vel", "lin_vel_ref"):
            arr = np.asarray(getattr(self, name), dtype=float)
            setattr(self, name, arr)
            if len(arr) != T:
                raise ValueError(f"{name} length differs from rewards")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")

    @property
    def length(self):
        return len(self.rewards)


@dataclass
class MetricReport:
    values: dict = field(default_factory=dict)

    def __getitem__(self, k):
        return self.values[k]


def compute_metrics(log):
    """Single-episode metrics: MSE trackers + undiscounted reward sum."""
    if log.length == 0:
        raise ValueError("empty episode log")
    dof_err = log.dof_pos - log.dof_ref
    rp_err = log.rollpitch - log.rollpitch_ref
    v_err = log.lin_vel - log.lin_vel_ref
    return MetricReport({
        "tracking_dof_pos": float(np.mean(dof_err ** 2)),
        "tracking_yaw": float(np.mean((log.yaw - log.yaw_ref) ** 2)),
        "tracking_linvel": float(np.mean(np.sum(v_err ** 2, axis=-1))),
        "tracking_rollpitch": float(np.mean(np.sum(rp_err ** 2, axis=-1))),
        "cumulative_reward": float(np.sum(log.rewards)),
    })


@dataclass(frozen=True)
class DifficultyThresholds:
    easy_below: int = 80  # frames; length < easy_below -> easy
    hard_above: int = 200  # length > hard_above -> hard

    def bucket(self, length):
        if length <= 0:
            raise ValueError("clip length must be positive")
        if length < self.easy_below:
            return "easy"
        if length > self.hard_above:
            return "hard"
        return "medium"  # closed lower bound: length == easy_below is medium


def difficulty_split(lengths, thresholds=None):
    """Partition clip lengths into {easy, medium, hard} index lists."""
    th = thresholds or DifficultyThresholds()
    out = {"easy": [], "medium": [], "hard": []}
    for i, L in enumerate(lengths):
        out[th.bucket(L)].append(i)
    return out


def aggregate(reports):
    """Mean +- population std per metric over seed reports."""
    if not reports:
        raise ValueError("no reports to aggregate")
    out = {}
    for name in METRIC_NAMES:
        vals = np.array([r[name] for r in reports])
        out[name] = {
            "mean": float(vals.mean()),
            "std": float(vals.std()) if len(vals) > 1 else None,
        }
    return out


def write_metrics_csv(rows, path):
    """Table-shaped CSV: baseline, difficulty, metric columns, mean, std."""
    fieldnames = ["baseline", "difficulty", "metric", "mean", "std"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def episode_log_from_eval(env_model, records, clip_id="", seed=0):
    """Build an EpisodeLog from per-step dicts collected during evaluation.

    Each record needs: q, q_ref, yaw, roll, pitch, lin_vel, reward.  Reference
    yaw/roll/pitch/velocity are the standing defaults (zero).
    """
    T = len(records)
    z = np.zeros(T)
    return EpisodeLog(
        dof_pos=np.array([r["q"] for r in records]),
        dof_ref=np.array([r["q_ref"] for r in records]),
        yaw=np.array([r["yaw"] for r in records]),
        yaw_ref=z,
        rollpitch=np.array([[r["roll"], r["pitch"]] for r in records]),
        rollpitch_ref=np.zeros((T, 2)),
        lin_vel=np.array([r["lin_vel"] for r in records]),
        lin_vel_ref=np.zeros((T, 3)),
        rewards=np.array([r["reward"] for r in records]),
        clip_id=clip_id,
        seed=seed,
    )
