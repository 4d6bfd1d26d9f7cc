"""Part-wise vector quantization of upper-body sign motion.

Frame features are the raw per-part DoF vectors (no learned encoder); each
part (upper body, left hand, right hand) gets its own codebook learned by
Lloyd's algorithm with k-means++ style seeding.  Token assignment is exact
squared-Euclidean nearest neighbor, ties broken by lowest code index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DimensionError

PART_NAMES = ("UB", "LH", "RH")


@dataclass(frozen=True)
class PartSplit:
    """Disjoint DoF index sets for upper body, left hand, right hand."""

    ub: tuple
    lh: tuple
    rh: tuple

    def __post_init__(self):
        sets = [set(self.ub), set(self.lh), set(self.rh)]
        if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
            raise ValueError("part index sets must be disjoint")

    def indices(self, part):
        return {"UB": self.ub, "LH": self.lh, "RH": self.rh}[part]

    def all_indices(self):
        return sorted(set(self.ub) | set(self.lh) | set(self.rh))


def default_part_split(model):
    """UB = torso + shoulders + elbows + wrists; LH/RH = finger DoFs."""
    ub, lh, rh = [], [], []
    for i, d in enumerate(model.dofs):
        if d.group in ("torso", "shoulder", "elbow", "wrist"):
            ub.append(i)
        elif d.group == "finger":
            (lh if d.name.startswith("left_") else rh).append(i)
    split = PartSplit(tuple(ub), tuple(lh), tuple(rh))
    if set(split.all_indices()) != set(model.upper_indices):
        raise ValueError("part split must cover the upper DoF partition")
    return split


@dataclass
class Codebook:
    codes: np.ndarray  # (N_Z, d)

    def __post_init__(self):
        self.codes = np.asarray(self.codes, dtype=float)
        if self.codes.ndim != 2:
            raise ValueError("codes must be (N_Z, d)")
        if not np.all(np.isfinite(self.codes)):
            raise ValueError("codes must be finite")

    @property
    def size(self):
        return len(self.codes)

    @property
    def dim(self):
        return self.codes.shape[1]


def fit_codebook(frames, n_codes, seed=0, max_iters=100, tol=1e-6):
    """Lloyd's iterations with k-means++ seeding.

    Distortion (mean squared nearest-code distance) is asserted non-increasing
    per iteration; empty clusters are re-seeded from the farthest point.
    Returns (Codebook, distortion history).
    """
    frames = np.asarray(frames, dtype=float)
    M = len(frames)
    if M < n_codes:
        raise ValueError(f"need at least {n_codes} frames, got {M}")
    rng = np.random.default_rng(seed)

    # k-means++ seeding
    codes = np.empty((n_codes, frames.shape[1]))
    codes[0] = frames[rng.integers(M)]
    d2 = np.sum((frames - codes[0]) ** 2, axis=1)
    for k in range(1, n_codes):
        total = d2.sum()
        if total <= 0:
            codes[k] = frames[rng.integers(M)]
        else:
            codes[k] = frames[rng.choice(M, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((frames - codes[k]) ** 2, axis=1))

    history = []
    prev = np.inf
    for _ in range(max_iters):
        dists = _sq_dists(frames, codes)
        assign = np.argmin(dists, axis=1)
        distortion = float(np.mean(dists[np.arange(M), assign]))
        assert distortion <= prev + 1e-12, "Lloyd distortion increased"
        history.append(distortion)
        for k in range(n_codes):
            mask = assign == k
            if mask.any():
                codes[k] = frames[mask].mean(axis=0)
            else:  # re-seed dead code from the farthest point
                far = np.argmax(dists[np.arange(M), assign])
                codes[k] = frames[far]
        if prev - distortion < tol * max(prev, 1e-12):
            break
        prev = distortion
    return Codebook(codes.copy()), history


def _sq_dists(frames, codes):
    return ((frames[:, None, :] - codes[None, :, :]) ** 2).sum(axis=2)


def quantize(frame, codebook):
    """Index of the nearest code; ties break to the lowest index."""
    frame = np.asarray(frame, dtype=float)
    if frame.shape != (codebook.dim,):
        raise DimensionError(
            f"frame dim {frame.shape} does not match codebook dim "
            f"({codebook.dim},)")
    d = np.sum((codebook.codes - frame) ** 2, axis=1)
    return int(np.argmin(d))


def tokenize_clip(traj, split, codebooks):
    """Per-part token sequences for a robot trajectory.

    `codebooks` maps part name -> Codebook.  Returns {part: (K,) int array}.
    """
    dofs = traj.dof_matrix()
    out = {}
    for part in PART_NAMES:
        idx = list(split.indices(part))
        if max(idx) >= dofs.shape[1]:
            raise ValueError("trajectory does not cover the part split")
        cb = codebooks.get(part)
        if cb is None or cb.size == 0:
            raise ValueError(f"empty codebook for part {part}")
        out[part] = np.array([quantize(f, cb) for f in dofs[:, idx]])
    return out


def reconstruct(tokens, split, codebooks, num_dofs):
    """Lookup-table reconstruction of the quantized upper-body channels."""
    K = len(next(iter(tokens.values())))
    frames = np.zeros((K, num_dofs))
    for part in PART_NAMES:
        idx = list(split.indices(part))
        frames[:, idx] = codebooks[part].codes[tokens[part]]
    return frames


def codebook_stats(tokens, codebook):
    """Utilization fraction and perplexity of a token sequence."""
    tokens = np.asarray(tokens, dtype=int)
    if tokens.size == 0:
        raise ValueError("need at least one token")
    counts = np.bincount(tokens, minlength=codebook.size).astype(float)
    p = counts / counts.sum()
    nz = p[p > 0]
    entropy = -float(np.sum(nz * np.log(nz)))
    return {
        "utilization": len(np.unique(tokens)) / codebook.size,
        "perplexity": float(np.exp(entropy)),
    }


DEFAULT_CODEBOOK_SIZES = {"UB": 256, "LH": 128, "RH": 128}


def fit_all(trajs, split, sizes=None, seed=0):
    """Fit per-part codebooks over a list of trajectories."""
    sizes = dict(DEFAULT_CODEBOOK_SIZES, **(sizes or {}))
    frames = np.concatenate([t.dof_matrix() for t in trajs])
    books = {}
    for part in PART_NAMES:
        idx = list(split.indices(part))
        books[part], _ = fit_codebook(frames[:, idx], sizes[part], seed=seed)
    return books


def save_codebooks(books, path):
    import json
    data = {part: {"codes": books[part].codes.tolist()} for part in books}
    with open(path, "w") as fh:
        json.dump(data, fh)


def load_codebooks(path):
    import json
    with open(path) as fh:
        data = json.load(fh)
    return {part: Codebook(np.asarray(d["codes"])) for part, d in data.items()}
