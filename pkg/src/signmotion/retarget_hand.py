"""Dexterous-hand retargeting by keypoint-vector optimization.

Per frame, the 15 finger DoFs of one hand are chosen to minimize

    sum_i || alpha * V_i - v_i(q) ||^2  +  lam * || q - q_prev ||^2

where V_i are the human wrist->fingertip vectors and v_i(q) the robot's,
computed from the hand subtree's FK.  Solved with projected gradient descent
plus backtracking line search; a configurable subset of DoFs is frozen at
fixed values to absorb DoF misalignment between the hand models.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import quat_multiply, quat_rotate
from .model import DimensionError

FINGERS = ("thumb", "index", "middle", "ring", "pinky")


def _rotate_rows(q, v):
    """Rotate vector(s) v by unit quaternion rows q (B, 4)."""
    qv = q[:, 1:]
    w = q[:, 0:1]
    v = np.broadcast_to(np.asarray(v, dtype=float), qv.shape)
    t = 2.0 * np.cross(qv, v)
    return v + w * t + np.cross(qv, t)


def _mul_rows(a, b):
    """Row-wise Hamilton product of (B, 4) quaternion arrays."""
    aw, ax, ay, az = a[:, 0], a[:, 1], a[:, 2], a[:, 3]
    bw, bx, by, bz = b[:, 0], b[:, 1], b[:, 2], b[:, 3]
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=1)


@dataclass(frozen=True)
class HandChain:
    """Kinematic subtree of one hand, rooted at the wrist link."""

    side: str
    dof_names: tuple  # 15 finger DoF names, model order
    dof_axes: np.ndarray  # (15, 3)
    dof_offsets: np.ndarray  # (15, 3)
    dof_parents: tuple  # parent within the chain, -1 = wrist root
    dof_limits: np.ndarray  # (15, 2)
    tip_parents: tuple  # chain index carrying each fingertip site
    tip_offsets: np.ndarray  # (5, 3)
    model_indices: tuple  # position of each chain DoF in the full model

    @property
    def num_dofs(self):
        return len(self.dof_names)

    def tip_vectors(self, q):
        """Wrist->fingertip vectors for hand pose(s) q.

        Accepts (..., 15) and returns (..., 5, 3); a plain (15,) pose gives
        (5, 3).  Batching keeps the numeric gradient affordable.
        """
        q = np.asarray(q, dtype=float)
        n = self.num_dofs
        if q.shape[-1:] != (n,):
            raise DimensionError(f"expected (..., {n}) hand pose")
        lead = q.shape[:-1]
        qf = q.reshape(-1, n)
        B = qf.shape[0]
        pos = np.empty((B, n, 3))
        rot = np.empty((B, n, 4))
        for i in range(n):
            p = self.dof_parents[i]
            if p < 0:
                ppos = np.zeros((B, 3))
                prot = np.zeros((B, 4))
                prot[:, 0] = 1.0
            else:
                ppos, prot = pos[:, p], rot[:, p]
            pos[:, i] = ppos + _rotate_rows(prot, self.dof_offsets[i])
            half = 0.5 * qf[:, i]
            local = np.empty((B, 4))
            local[:, 0] = np.cos(half)
            local[:, 1:] = np.sin(half)[:, None] * self.dof_axes[i]
            rot[:, i] = _mul_rows(prot, local)
        tips = np.empty((B, len(self.tip_parents), 3))
        for k, (p, off) in enumerate(zip(self.tip_parents, self.tip_offsets)):
            tips[:, k] = pos[:, p] + _rotate_rows(rot[:, p], off)
        return tips.reshape(lead + (len(self.tip_parents), 3))


def extract_hand_chain(model, side):
    """Pull one hand's finger subtree out of a full robot model."""
    root = model.index(f"{side}_wrist_roll")
    chain_idx = []
    for i, d in enumerate(model.dofs):
        if d.group == "finger" and d.name.startswith(side + "_"):
            chain_idx.append(i)
    local = {gi: ci for ci, gi in enumerate(chain_idx)}
    parents = []
    for gi in chain_idx:
        p = model.dofs[gi].parent
        parents.append(local[p] if p in local else (-1 if p == root else None))
    if any(p is None for p in parents):
        raise ValueError(f"{side} hand subtree is not rooted at the wrist")
    tip_parents, tip_offsets = [], []
    for f in FINGERS:
        s = model.sites[model.site_index(f"{side}_{f}_tip")]
        tip_parents.append(local[s.parent])
        tip_offsets.append(s.offset)
    return HandChain(
        side=side,
        dof_names=tuple(model.dofs[i].name for i in chain_idx),
        dof_axes=np.array([model.dofs[i].axis for i in chain_idx]),
        dof_offsets=np.array([model.dofs[i].offset for i in chain_idx]),
        dof_parents=tuple(parents),
        dof_limits=np.array([model.dofs[i].limits for i in chain_idx]),
        tip_parents=tuple(tip_parents),
        tip_offsets=np.array(tip_offsets),
        model_indices=tuple(chain_idx),
    )


@dataclass
class HandKeypointSpec:
    """Vector pairs, scale, smoothing and frozen DoFs for one hand."""

    chain: HandChain
    alpha: float = 1.1  # human->robot scale factor
    lam: float = 0.05  # temporal smoothing weight
    frozen: dict = field(default_factory=dict)  # dof name -> fixed value

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        for name in self.frozen:
            if name not in self.chain.dof_names:
                raise KeyError(f"frozen DoF {name} not in hand chain")

    def frozen_indices(self):
        return sorted(self.chain.dof_names.index(n) for n in self.frozen)

    def free_indices(self):
        fz = set(self.frozen_indices())
        return [i for i in range(self.chain.num_dofs) if i not in fz]

    def apply_frozen(self, q):
        q = np.array(q, dtype=float)
        for name, val in self.frozen.items():
            q[self.chain.dof_names.index(name)] = val
        return q


def default_hand_spec(model, side, alpha=1.1, lam=0.05):
    """Default spec: distal joint of each finger frozen at zero."""
    chain = extract_hand_chain(model, side)
    frozen = {f"{side}_{f}_2": 0.0 for f in FINGERS}
    return HandKeypointSpec(chain=chain, alpha=alpha, lam=lam, frozen=frozen)


@dataclass
class SolverConfig:
    max_iters: int = 100
    tol: float = 1e-8
    step_init: float = 0.1
    backtrack: float = 0.5
    min_step: float = 1e-10


def hand_objective(q_t, q_prev, human_vectors, spec):
    """Data term + smoothing term; frozen DoFs must already be substituted."""
    q_t = np.asarray(q_t, dtype=float)
    q_prev = np.asarray(q_prev, dtype=float)
    human_vectors = np.asarray(human_vectors, dtype=float)
    if human_vectors.shape != (len(FINGERS), 3):
        raise DimensionError("human vectors must be (5, 3)")
    if q_t.shape != (spec.chain.num_dofs,) or q_prev.shape != q_t.shape:
        raise DimensionError("hand pose must match chain DoF count")
    v_robot = spec.chain.tip_vectors(q_t)
    diff = spec.alpha * human_vectors - v_robot
    data = float(np.sum(diff * diff))
    reg = spec.lam * float(np.sum((q_t - q_prev) ** 2))
    return data + reg


def _objective_rows(Q, q_prev, human_vectors, spec):
    """Objective for a batch of hand poses (B, n)."""
    v_robot = spec.chain.tip_vectors(Q)
    diff = spec.alpha * human_vectors[None] - v_robot
    data = np.sum(diff * diff, axis=(1, 2))
    reg = spec.lam * np.sum((Q - q_prev[None]) ** 2, axis=1)
    return data + reg


def _numeric_gradient(q, q_prev, human_vectors, spec, free, h=1e-5):
    m = len(free)
    Q = np.tile(q, (2 * m, 1))
    for k, i in enumerate(free):
        Q[2 * k, i] += h
        Q[2 * k + 1, i] -= h
    obj = _objective_rows(Q, q_prev, human_vectors, spec)
    return (obj[0::2] - obj[1::2]) / (2.0 * h)


def solve_frame(q_prev, human_vectors, spec, config=None):
    """Minimize the hand objective from a warm start; never returns worse.

    Returns (q, info) where info carries the objective trace and the indices
    of DoFs resting on their limits.
    """
    config = config or SolverConfig()
    human_vectors = np.asarray(human_vectors, dtype=float)
    if not np.all(np.isfinite(human_vectors)):
        raise ValueError("non-finite human keypoint vectors")
    chain = spec.chain
    lo, hi = chain.dof_limits[:, 0], chain.dof_limits[:, 1]
    free = spec.free_indices()

    q = spec.apply_frozen(np.clip(np.asarray(q_prev, dtype=float), lo, hi))
    q_prev = np.asarray(q_prev, dtype=float)
    obj = hand_objective(q, q_prev, human_vectors, spec)
    trace = [obj]
    step = config.step_init
    for _ in range(config.max_iters):
        grad = _numeric_gradient(q, q_prev, human_vectors, spec, free)
        gnorm = np.linalg.norm(grad)
        if gnorm < 1e-12:
            break
        improved = False
        while step >= config.min_step:
            cand = q.copy()
            cand[free] = cand[free] - step * grad
            cand = spec.apply_frozen(np.clip(cand, lo, hi))
            cand_obj = hand_objective(cand, q_prev, human_vectors, spec)
            if cand_obj < obj:
                improved = True
                break
            step *= config.backtrack
        if not improved:
            break
        decrease = obj - cand_obj
        q, obj = cand, cand_obj
        trace.append(obj)
        step = min(step / config.backtrack, 1.0)  # cautious step growth
        if decrease < config.tol:
            break

    at_limit = [i for i in free
                if q[i] <= lo[i] + 1e-9 or q[i] >= hi[i] - 1e-9]
    info = {"objective": obj, "trace": trace, "at_limit": at_limit,
            "iterations": len(trace) - 1}
    return q, info


def retarget_hand_clip(human_vector_seq, spec, config=None):
    """Solve a whole clip with frame-to-frame warm starting.

    `human_vector_seq` has shape (K, 5, 3).  Frame 0 warm-starts from the zero
    pose.  Returns (poses (K, 15), per-frame info list).
    """
    human_vector_seq = np.asarray(human_vector_seq, dtype=float)
    if human_vector_seq.ndim != 3 or human_vector_seq.shape[0] < 1:
        raise ValueError("need at least one frame of hand keypoint vectors")
    q_prev = spec.apply_frozen(np.zeros(spec.chain.num_dofs))
    poses, infos = [], []
    for V in human_vector_seq:
        q, info = solve_frame(q_prev, V, spec, config)
        poses.append(q)
        infos.append(info)
        q_prev = q
    return np.array(poses), infos


def vectors_from_keypoints(wrist, tips):
    """Helper: build the 5 keypoint vectors from raw keypoint positions."""
    wrist = np.asarray(wrist, dtype=float)
    tips = np.asarray(tips, dtype=float)
    return tips - wrist[None, :]
