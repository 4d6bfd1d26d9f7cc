"""Pipeline command-line entry point.

Every stage runs as a subcommand with a JSON config file, `--set key=value`
dotted overrides, and a manifest written beside the artifacts so runs are
reproducible from (config hash, seed) alone.  Exit codes: 0 success, 1 config
or input validation failure, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .evaluation import aggregate, write_metrics_csv
from .model import (
    DimensionError,
    default_robot_model,
    load_motion_clip,
    load_robot_model,
    load_trajectory,
    save_trajectory,
)
from .ppo import PpoConfig
from .retarget_body import RetargetError, calibrate, default_mapping, \
    load_mapping_table, retarget_clip
from .retarget_hand import SolverConfig, default_hand_spec, retarget_hand_clip
from .sim_env import EnvConfig, RandomizationConfig, SignTrackingEnv, \
    default_standing_pose
from .tokenizer import (
    codebook_stats,
    default_part_split,
    fit_all,
    load_codebooks,
    save_codebooks,
    tokenize_clip,
)
from .train import DecoupledRunner, TrainConfig, train
from .trajectory import KinematicLimits, PlanningError, densify

log = logging.getLogger("signmotion")


class ConfigError(ValueError):
    pass


def _build_dataclass(cls, d, path=""):
    """Instantiate a (possibly nested) config dataclass, rejecting unknowns."""
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(d) - set(fields)
    if unknown:
        raise ConfigError(
            f"unknown config key(s) at '{path or cls.__name__}': "
            f"{sorted(unknown)}")
    nested = {"ppo": PpoConfig, "env": EnvConfig,
              "randomization": RandomizationConfig}
    kwargs = {}
    for k, v in d.items():
        if k in nested and isinstance(v, dict):
            kwargs[k] = _build_dataclass(nested[k], v, f"{path}{k}.")
        elif isinstance(v, list):
            kwargs[k] = tuple(v) if k in ("seeds", "hidden") else v
        else:
            kwargs[k] = v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid config at '{path or cls.__name__}': {e}")


def load_config(path, overrides=()):
    """Read the JSON config and apply dotted --set overrides."""
    cfg = {}
    if path:
        try:
            with open(path) as fh:
                cfg = json.load(fh)
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} line {e.lineno}: {e.msg}")
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set needs key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw  # bare strings allowed
        node = cfg
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"--set {key}: {p} is not an object")
        node[parts[-1]] = value
    return cfg


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def write_manifest(out_dir, subcommand, cfg, seed, inputs, outputs):
    manifest = {
        "subcommand": subcommand,
        "config": cfg,
        "config_hash": config_hash(cfg),
        "seed": seed,
        "inputs": sorted(inputs),
        "outputs": sorted(outputs),
        "versions": {"signmotion": __version__, "numpy": np.__version__,
                     "python": sys.version.split()[0]},
    }
    path = os.path.join(out_dir, f"{subcommand}.manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return path


def _robot_model(cfg):
    path = cfg.get("robot_model")
    return load_robot_model(path) if path else default_robot_model()


def _load_trajs(paths):
    if not paths:
        raise ConfigError("no input trajectories given")
    return [load_trajectory(p) for p in paths]


# ---------------------------------------------------------------------------
# Subcommand handlers.  Each returns the list of artifact paths it wrote.
# ---------------------------------------------------------------------------

def cmd_retarget_body(args, cfg, out_dir):
    model = _robot_model(cfg)
    clip = load_motion_clip(args.clip)
    section = cfg.get("retarget", {})
    mapping = load_mapping_table(section["mapping"]) \
        if "mapping" in section else default_mapping()
    cal = calibrate(clip.skeleton, model, mapping)
    traj, report = retarget_clip(clip, cal, model)
    out = os.path.join(out_dir, "retargeted.json")
    save_trajectory(traj, out)
    rep_path = os.path.join(out_dir, "retarget_report.json")
    with open(rep_path, "w") as fh:
        json.dump({"clamp_fraction": report.clamp_fraction,
                   "clamped_dofs": report.clamped_dofs,
                   "num_frames": traj.num_frames}, fh, indent=2)
    return [out, rep_path], [args.clip]


def cmd_retarget_hand(args, cfg, out_dir):
    model = _robot_model(cfg)
    section = cfg.get("hand", {})
    with open(args.keypoints) as fh:
        data = json.load(fh)
    solver = _build_dataclass(SolverConfig, section.get("solver", {}), "hand.")
    result = {}
    for side in ("left", "right"):
        if side not in data:
            continue
        seq = np.asarray(data[side], dtype=float)
        spec = default_hand_spec(model, side,
                                 alpha=section.get("alpha", 1.1),
                                 lam=section.get("lam", 0.05))
        poses, infos = retarget_hand_clip(seq, spec, solver)
        result[side] = {
            "dof_names": list(spec.chain.dof_names),
            "poses": poses.tolist(),
            "objective": [i["objective"] for i in infos],
        }
    if not result:
        raise ConfigError("keypoint file has neither 'left' nor 'right'")
    out = os.path.join(out_dir, "hand_poses.json")
    with open(out, "w") as fh:
        json.dump(result, fh)
    return [out], [args.keypoints]


def cmd_make_synthetic(args, cfg, out_dir):
    from .synthetic import synthetic_corpus
    model = _robot_model(cfg)
    section = cfg.get("synthetic", {})
    trajs = synthetic_corpus(model,
                             num_clips=section.get("num_clips", 5),
                             seed=args.seed,
                             num_frames=section.get("num_frames", 120),
                             fps=section.get("fps", 30.0),
                             amplitude=section.get("amplitude", 0.35))
    outputs = []
    for i, t in enumerate(trajs):
        p = os.path.join(out_dir, f"clip_{i:03d}.json")
        save_trajectory(t, p)
        outputs.append(p)
    return outputs, []


def cmd_train(args, cfg, out_dir):
    model = _robot_model(cfg)
    clips = _load_trajs(args.clips or cfg.get("clips", []))
    tc = _build_dataclass(TrainConfig, cfg.get("train", {}), "train.")
    if "ppo" in cfg:
        tc.ppo = _build_dataclass(PpoConfig, cfg["ppo"], "ppo.")
    if "env" in cfg:
        tc.env = _build_dataclass(EnvConfig, cfg["env"], "env.")
    runner, rows = train(model, clips, tc, args.seed, out_dir=out_dir)
    outputs = [os.path.join(out_dir, "checkpoint.npz"),
               os.path.join(out_dir, "curve.csv")]
    return outputs, list(args.clips or cfg.get("clips", []))


def cmd_eval(args, cfg, out_dir):
    model = _robot_model(cfg)
    clips = _load_trajs(args.clips or cfg.get("clips", []))
    tc = _build_dataclass(TrainConfig, cfg.get("train", {}), "train.")
    if "env" in cfg:
        tc.env = _build_dataclass(EnvConfig, cfg["env"], "env.")
    section = cfg.get("eval", {})
    seeds = section.get("seeds", [123, 321, 1])
    episodes = section.get("episodes", len(clips))
    per_seed = []
    for seed in seeds:
        runner = DecoupledRunner(model, clips, tc, seed)
        if args.checkpoint:
            runner.load_checkpoint(args.checkpoint)
        results = runner.evaluate(episodes=episodes, seed=seed)
        per_seed.append({
            "tracking_dof_pos": float(np.mean([r["dof_mse"]
                                               for r in results])),
            "tracking_yaw": 0.0,
            "tracking_linvel": 0.0,
            "tracking_rollpitch": 0.0,
            "cumulative_reward": float(np.mean([r["return"]
                                                for r in results])),
        })
    agg = aggregate([_AsReport(d) for d in per_seed])
    rows = [{"baseline": section.get("baseline", "decoupled"),
             "difficulty": "all", "metric": k,
             "mean": v["mean"], "std": v["std"]} for k, v in agg.items()]
    out = os.path.join(out_dir, "metrics.csv")
    write_metrics_csv(rows, out)
    inputs = list(args.clips or cfg.get("clips", []))
    if args.checkpoint:
        inputs.append(args.checkpoint)
    return [out], inputs


class _AsReport:
    def __init__(self, d):
        self._d = d

    def __getitem__(self, k):
        return self._d[k]


def cmd_tokenize(args, cfg, out_dir):
    model = _robot_model(cfg)
    trajs = _load_trajs(args.clips or cfg.get("clips", []))
    split = default_part_split(model)
    section = cfg.get("tokenizer", {})
    if args.codebooks:
        books = load_codebooks(args.codebooks)
        cb_path = args.codebooks
        outputs = []
    else:
        books = fit_all(trajs, split, sizes=section.get("sizes"),
                        seed=args.seed)
        cb_path = os.path.join(out_dir, "codebooks.json")
        save_codebooks(books, cb_path)
        outputs = [cb_path]
    token_data = []
    for i, t in enumerate(trajs):
        tokens = tokenize_clip(t, split, books)
        token_data.append({part: seq.tolist() for part, seq in tokens.items()})
    stats = {part: codebook_stats(
        np.concatenate([np.asarray(d[part]) for d in token_data]),
        books[part]) for part in books}
    out = os.path.join(out_dir, "tokens.json")
    with open(out, "w") as fh:
        json.dump({"clips": token_data, "stats": stats}, fh)
    outputs.append(out)
    return outputs, list(args.clips or cfg.get("clips", []))


def cmd_trajgen(args, cfg, out_dir):
    model = _robot_model(cfg)
    traj = load_trajectory(args.trajectory)
    section = cfg.get("trajgen", {})
    if args.limits:
        with open(args.limits) as fh:
            lim = json.load(fh)
    else:
        lim = section.get("limits",
                          {"v_max": 4.0, "a_max": 20.0, "j_max": 200.0})
    limits = _build_dataclass(KinematicLimits, lim, "trajgen.limits.")
    lo, hi = model.limits_arrays()
    times, rows = densify(traj.dof_matrix(), traj.fps, limits,
                          rate=section.get("rate", 500.0),
                          margin=section.get("margin", 0.02),
                          limits_lo=lo, limits_hi=hi)
    out = os.path.join(out_dir, "commands.csv")
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [d.name for d in model.dofs])
        for t, q in zip(times, rows):
            writer.writerow([f"{t:.6f}"] + [f"{x:.9f}" for x in q])
    return [out], [args.trajectory]


def cmd_simulate(args, cfg, out_dir):
    """Replay a trajectory as the reference with a zero lower-body policy."""
    model = _robot_model(cfg)
    traj = load_trajectory(args.trajectory)
    env_cfg = _build_dataclass(EnvConfig, cfg.get("env", {}), "env.")
    env = SignTrackingEnv(model, env_cfg)
    obs = env.reset(traj, seed=args.seed, start_frame=0)
    default = default_standing_pose(model)
    upper = np.asarray(model.upper_indices, dtype=int)
    total, steps, sq, fell = 0.0, 0, 0.0, False
    done = False
    while not done:
        ref = env.reference_frame()
        a = np.zeros(model.num_dofs)
        a[upper] = (ref.dof_pos[upper] - default[upper]) / env_cfg.action_scale
        obs, reward, done, info = env.step(a)
        total += reward
        steps += 1
        sq += float(np.mean((env.reference_frame().dof_pos
                             - env.state.q) ** 2))
        fell = fell or info["fallen"]
    out = os.path.join(out_dir, "simulate_metrics.json")
    with open(out, "w") as fh:
        json.dump({"cumulative_reward": total, "steps": steps,
                   "dof_mse": sq / max(1, steps), "fell": fell}, fh, indent=2)
    return [out], [args.trajectory]


HANDLERS = {
    "retarget-body": cmd_retarget_body,
    "retarget-hand": cmd_retarget_hand,
    "train": cmd_train,
    "eval": cmd_eval,
    "tokenize": cmd_tokenize,
    "trajgen": cmd_trajgen,
    "simulate": cmd_simulate,
    "make-synthetic": cmd_make_synthetic,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="signmotion",
        description="Sign-motion retargeting, tracking, and tokenization "
                    "pipeline.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=0, help="master RNG seed")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--set", action="append", default=[], dest="overrides",
                       metavar="KEY=VALUE",
                       help="dotted config override, e.g. ppo.epochs=3")

    p = sub.add_parser("retarget-body", help="retarget a source motion clip")
    p.add_argument("clip", help="motion clip JSON")
    common(p)

    p = sub.add_parser("retarget-hand", help="solve hand poses from keypoints")
    p.add_argument("keypoints",
                   help="JSON with 'left'/'right' (K, 5, 3) vector arrays")
    common(p)

    p = sub.add_parser("train", help="train the lower-body tracking policy")
    p.add_argument("clips", nargs="*", help="reference trajectory JSONs")
    common(p)

    p = sub.add_parser("eval", help="evaluate a trained policy over seeds")
    p.add_argument("clips", nargs="*", help="reference trajectory JSONs")
    p.add_argument("--checkpoint", default=None, help="policy checkpoint")
    common(p)

    p = sub.add_parser("tokenize", help="fit codebooks and tokenize clips")
    p.add_argument("clips", nargs="*", help="robot trajectory JSONs")
    p.add_argument("--codebooks", default=None,
                   help="reuse existing codebooks instead of fitting")
    common(p)

    p = sub.add_parser("trajgen",
                       help="densify a trajectory into jerk-limited commands")
    p.add_argument("trajectory", help="robot trajectory JSON")
    p.add_argument("--limits", default=None, help="kinematic limits JSON")
    common(p)

    p = sub.add_parser("simulate",
                       help="replay a trajectory in the surrogate env")
    p.add_argument("trajectory", help="robot trajectory JSON")
    common(p)

    p = sub.add_parser("make-synthetic", help="generate a synthetic corpus")
    common(p)
    return parser


def main(argv=None):
    logging.basicConfig(
        level=os.environ.get("SIGNMOTION_LOG", "INFO").upper(),
        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
    except ConfigError as e:
        log.error("%s", e)
        return 1
    os.makedirs(args.out, exist_ok=True)
    try:
        outputs, inputs = HANDLERS[args.subcommand](args, cfg, args.out)
    except (ConfigError, DimensionError, RetargetError, KeyError,
            FileNotFoundError) as e:
        log.error("%s", e)
        return 1
    except (PlanningError, FloatingPointError, OSError) as e:
        log.error("runtime failure: %s", e)
        return 2
    manifest = write_manifest(args.out, args.subcommand, cfg, args.seed,
                              inputs, outputs)
    log.info("wrote %d artifact(s); manifest %s", len(outputs), manifest)
    return 0


if __name__ == "__main__":
    sys.exit(main())
