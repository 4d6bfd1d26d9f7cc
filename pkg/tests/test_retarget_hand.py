"""Hand pose optimization tests: synthesize-then-recover oracles."""

import numpy as np
import pytest

from signmotion.model import DimensionError, default_robot_model
from signmotion.retarget_hand import (
    SolverConfig,
    default_hand_spec,
    extract_hand_chain,
    hand_objective,
    retarget_hand_clip,
    solve_frame,
    vectors_from_keypoints,
)


@pytest.fixture(scope="module")
def model():
    return default_robot_model()


@pytest.fixture(scope="module")
def left_spec(model):
    return default_hand_spec(model, "left")


def synth_vectors(spec, q):
    """Human keypoint vectors whose scaled image is exactly chain(q)."""
    return spec.chain.tip_vectors(spec.apply_frozen(q)) / spec.alpha


def test_chain_has_15_dofs(model):
    for side in ("left", "right"):
        chain = extract_hand_chain(model, side)
        assert chain.num_dofs == 15
        assert all(n.startswith(side) for n in chain.dof_names)


def test_tip_vectors_shape(left_spec):
    v = left_spec.chain.tip_vectors(np.zeros(15))
    assert v.shape == (5, 3)
    assert np.all(np.isfinite(v))


def test_objective_zero_at_exact_match(left_spec):
    q = left_spec.apply_frozen(np.full(15, 0.2))
    V = synth_vectors(left_spec, q)
    assert hand_objective(q, q, V, left_spec) < 1e-18


def test_objective_rejects_bad_shapes(left_spec):
    with pytest.raises(DimensionError):
        hand_objective(np.zeros(14), np.zeros(14), np.zeros((5, 3)),
                       left_spec)
    with pytest.raises(DimensionError):
        hand_objective(np.zeros(15), np.zeros(15), np.zeros((4, 3)),
                       left_spec)


def test_solve_never_returns_worse(left_spec):
    rng = np.random.default_rng(0)
    for _ in range(10):
        q_prev = left_spec.apply_frozen(rng.uniform(0.0, 0.5, 15))
        V = rng.uniform(-0.05, 0.12, (5, 3))
        start = hand_objective(q_prev, q_prev, V, left_spec)
        q, info = solve_frame(q_prev, V, left_spec)
        assert info["objective"] <= start + 1e-15
        trace = info["trace"]
        assert all(b <= a + 1e-15 for a, b in zip(trace, trace[1:]))


def test_recover_synthesized_poses(model):
    """Vectors generated from known joint angles are matched closely.

    Recovery oracle runs with alpha = 1 and lam = 0 so the optimum is the
    synthesizing pose itself.
    """
    spec = default_hand_spec(model, "left", alpha=1.0, lam=0.0)
    rng = np.random.default_rng(1)
    cfg = SolverConfig(max_iters=200, tol=1e-14)
    lo = spec.chain.dof_limits[:, 0]
    hi = spec.chain.dof_limits[:, 1]
    for _ in range(10):
        q_true = spec.apply_frozen(np.clip(rng.uniform(0.1, 0.6, 15), lo, hi))
        V = spec.chain.tip_vectors(q_true)
        q, info = solve_frame(q_true + rng.uniform(-0.05, 0.05, 15), V,
                              spec, cfg)
        v_got = spec.chain.tip_vectors(q)
        assert np.max(np.linalg.norm(V - v_got, axis=-1)) < 1e-3


def test_frozen_dofs_stay_fixed(left_spec):
    rng = np.random.default_rng(2)
    V = rng.uniform(-0.05, 0.1, (5, 3))
    q, _ = solve_frame(np.zeros(15), V, left_spec)
    for name, val in left_spec.frozen.items():
        assert q[left_spec.chain.dof_names.index(name)] == val


def test_solution_within_limits(left_spec):
    rng = np.random.default_rng(3)
    lo = left_spec.chain.dof_limits[:, 0]
    hi = left_spec.chain.dof_limits[:, 1]
    for _ in range(5):
        V = rng.uniform(-0.2, 0.2, (5, 3))  # partly unreachable
        q, _ = solve_frame(np.zeros(15), V, left_spec)
        assert np.all(q >= lo - 1e-12)
        assert np.all(q <= hi + 1e-12)


def test_warm_start_smooths_clip(left_spec):
    """Smoothing keeps consecutive solved poses close for smooth input."""
    rng = np.random.default_rng(4)
    base = left_spec.apply_frozen(np.full(15, 0.3))
    seq = []
    for k in range(8):
        qk = left_spec.apply_frozen(base + 0.01 * k)
        seq.append(synth_vectors(left_spec, qk))
    poses, infos = retarget_hand_clip(np.array(seq), left_spec)
    steps = np.abs(np.diff(poses, axis=0)).max(axis=1)
    assert np.max(steps) < 0.2
    assert len(infos) == 8


def test_clip_requires_frames(left_spec):
    with pytest.raises(ValueError):
        retarget_hand_clip(np.zeros((0, 5, 3)), left_spec)


def test_nonfinite_vectors_rejected(left_spec):
    V = np.full((5, 3), np.nan)
    with pytest.raises(ValueError):
        solve_frame(np.zeros(15), V, left_spec)


def test_vectors_from_keypoints():
    wrist = np.array([1.0, 2.0, 3.0])
    tips = np.tile(wrist, (5, 1)) + np.eye(5, 3)
    v = vectors_from_keypoints(wrist, tips)
    assert np.allclose(v, np.eye(5, 3))


def test_huge_lambda_pins_to_previous(model):
    spec = default_hand_spec(model, "left", lam=1e6)
    rng = np.random.default_rng(6)
    q_prev = spec.apply_frozen(np.full(15, 0.2))
    V = rng.uniform(-0.05, 0.1, (5, 3))
    q, _ = solve_frame(q_prev, V, spec)
    assert np.linalg.norm(q - q_prev) < 1e-3


def test_smoothing_term_pulls_toward_previous(model):
    """Higher lambda keeps the solution closer to the previous frame."""
    rng = np.random.default_rng(5)
    q_prev = np.full(15, 0.1)
    spec_lo = default_hand_spec(model, "left", lam=0.0)
    spec_hi = default_hand_spec(model, "left", lam=5.0)
    q_tgt = spec_lo.apply_frozen(np.full(15, 0.5))
    V = spec_lo.chain.tip_vectors(q_tgt) / spec_lo.alpha
    cfg = SolverConfig(max_iters=200)
    q_lo, _ = solve_frame(q_prev, V, spec_lo, cfg)
    q_hi, _ = solve_frame(q_prev, V, spec_hi, cfg)
    d_lo = np.linalg.norm(q_lo - spec_lo.apply_frozen(q_prev))
    d_hi = np.linalg.norm(q_hi - spec_hi.apply_frozen(q_prev))
    assert d_hi < d_lo
