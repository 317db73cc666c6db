"""Context activator: score unqueried historical voxels, keep the useful ones,
and extract completing features for the points inside them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hash_index import check_same_scale, build_index
from .svaq import propagate
from .voxelizer import VoxelSet
from .weights import WeightBundle, apply_stack

TRAIN = "train"
INFER = "infer"

_FACE_OFFSETS = np.array(
    [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=np.int64
)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


@dataclass(frozen=True)
class ScoredContext:
    voxels: VoxelSet
    scores: np.ndarray

    def __len__(self):
        return len(self.scores)


@dataclass(frozen=True)
class ActivatedContext:
    voxels: VoxelSet  # retained voxels, raw features
    features: np.ndarray  # score-scaled features
    scores: np.ndarray
    indices: np.ndarray  # rows of the scored context that were kept

    @property
    def m_prime(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class ContextOutput:
    o_c: np.ndarray  # (points in retained voxels, N_C)
    point_indices: np.ndarray  # source historical point of each o_c row
    voxel_out: np.ndarray


def score(context: VoxelSet, current: VoxelSet, weights: WeightBundle) -> ScoredContext:
    """Sigmoid score per context voxel, computed over the union context + current.

    Current features are zero-padded to the historical width.
    """
    check_same_scale(context, current)
    width = context.width
    cur = current.features
    if cur.shape[1] < width:
        cur = np.hstack([cur, np.zeros((len(cur), width - cur.shape[1]))])
    union = np.vstack([context.features, cur])
    logits = apply_stack(weights.stack("ca.score"), union)[:, 0]
    return ScoredContext(context, sigmoid(logits[: len(context)]))


def _keep(scored: ScoredContext, idx) -> ActivatedContext:
    idx = np.asarray(idx, dtype=np.int64)
    kept = scored.voxels.subset(idx)
    s = scored.scores[idx]
    return ActivatedContext(kept, kept.features * s[:, None], s, idx)


def activate(scored: ScoredContext, threshold: float, mode: str = INFER) -> ActivatedContext:
    """Scale each voxel by its score; at inference drop scores <= threshold."""
    if mode == TRAIN:
        return _keep(scored, np.arange(len(scored)))
    if mode != INFER:
        raise ValueError(f"unknown mode {mode!r}")
    return _keep(scored, np.flatnonzero(scored.scores > threshold))


def select_top(scored: ScoredContext, target_count: int) -> ActivatedContext:
    """Keep the ``target_count`` best-scoring voxels (ties: lower index first).

    Kept voxels stay in context order. Asking for more than exist keeps all;
    the actual count is ``m_prime``.
    """
    if target_count < 0:
        raise ValueError("target_count must be >= 0")
    n = len(scored)
    order = np.lexsort((np.arange(n), -scored.scores))
    return _keep(scored, np.sort(order[: min(target_count, n)]))


def neighbor_pool(coords: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Mean of each voxel and its present face neighbors."""
    index = build_index(coords)
    total = features.copy()
    count = np.ones(len(coords))
    for off in _FACE_OFFSETS:
        hit = index.lookup(coords + off)
        m = hit >= 0
        total[m] += features[hit[m]]
        count[m] += 1
    return total / count[:, None]


def extract(activated: ActivatedContext, weights: WeightBundle,
            pool_neighbors: bool = False) -> ContextOutput:
    """Per-voxel product of the point-wise and inter-voxel branches, propagated to points."""
    nc = weights.config.channel_dim
    r = activated.features
    if len(r) == 0:
        return ContextOutput(np.zeros((0, nc)), np.zeros(0, np.int64), np.zeros((0, nc)))
    inner = apply_stack(weights.stack("ca.mlp"), r)
    spc_in = neighbor_pool(activated.voxels.coords, r) if pool_neighbors else r
    inter = apply_stack(weights.stack("ca.spc"), spc_in)
    voxel_out = inner * inter
    pv = activated.voxels.point_voxel
    rows = np.flatnonzero(pv >= 0)
    return ContextOutput(propagate(voxel_out, pv[rows]), rows, voxel_out)
