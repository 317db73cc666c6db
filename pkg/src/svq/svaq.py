"""Sparse voxel-adjacent query: attention from current voxels to their
matched historical voxels at every scale, coarse-to-fine fusion, skip
connection and propagation back to points."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Mapping, Optional

import numpy as np

from .errors import DimensionError, InvariantError
from .hash_index import QueryAlignment, project, query
from .voxelizer import VoxelSet
from .weights import WeightBundle, apply_stack

ROW_CHUNK = 512


@dataclass(frozen=True)
class AttentionOutput:
    t: np.ndarray  # (|V^c|, d_k)
    scale: int

    def __len__(self):
        return len(self.t)


def masked_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Row softmax over columns where ``mask`` is True; other columns get 0.

    Rows with no unmasked column are all zero.
    """
    mask = np.broadcast_to(mask, logits.shape)
    z = np.where(mask, logits, -np.inf)
    top = z.max(axis=-1, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    e = np.where(mask, np.exp(z - top), 0.0)
    total = e.sum(axis=-1, keepdims=True)
    return np.divide(e, total, out=np.zeros_like(e), where=total > 0)


def attention_matrix(q, k, mask) -> np.ndarray:
    """Full ``(|V^c|, |V^q|)`` scaled dot-product weights with placeholder columns masked."""
    logits = q @ k.T / np.sqrt(q.shape[1])
    return masked_softmax(logits, np.asarray(mask, dtype=bool)[None, :])


def _run_chunks(fn, n, threads):
    bounds = [(a, min(a + ROW_CHUNK, n)) for a in range(0, n, ROW_CHUNK)]
    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda b: fn(*b), bounds))
    else:
        parts = [fn(a, b) for a, b in bounds]
    return parts


def attention(current: VoxelSet, alignment: QueryAlignment, hist_features: np.ndarray,
              weights: WeightBundle, scale: int, mode: str = "dense",
              threads: int = 1) -> AttentionOutput:
    """Scaled dot-product attention of current voxels over queried history.

    Only matched entries act as keys; placeholder entries are excluded from
    the softmax, and a row whose whole history is placeholders yields zeros.
    In ``paired`` mode each current voxel attends only to its own match.
    """
    if len(alignment) != len(current):
        raise DimensionError(
            f"alignment length {len(alignment)} != current voxel count {len(current)}"
        )
    lq, lk, lv = (weights[f"svaq.s{scale}.{n}"] for n in "qkv")
    dk = lq.out_dim
    hist_features = np.asarray(hist_features, dtype=np.float64)
    if hist_features.ndim != 2 or hist_features.shape[1] != lk.in_dim:
        raise DimensionError(
            f"historical width {hist_features.shape[-1]} != key layer input {lk.in_dim}"
        )
    out = np.zeros((len(current), lv.out_dim))
    matched = alignment.matched
    if not matched.any():
        return AttentionOutput(out, scale)
    rows = hist_features[alignment.indices[matched]]
    values = lv(rows)
    if mode == "paired":
        out[matched] = values
        return AttentionOutput(out, scale)
    if mode != "dense":
        raise ValueError(f"unknown attention mode {mode!r}")

    q = lq(current.features)
    keys = lk(rows)
    scale_factor = np.sqrt(dk)

    def block(a, b):
        logits = q[a:b] @ keys.T / scale_factor
        logits -= logits.max(axis=1, keepdims=True)
        e = np.exp(logits)
        return (e / e.sum(axis=1, keepdims=True)) @ values

    out[:] = np.vstack(_run_chunks(block, len(current), threads))
    return AttentionOutput(out, scale)


def fuse(ts: Mapping[int, AttentionOutput], fine_coords, current_sets: Mapping[int, VoxelSet],
         weights: WeightBundle) -> np.ndarray:
    """Project coarse attention rows onto scale-1 voxels, concatenate, fuse."""
    fine = getattr(fine_coords, "coords", fine_coords)
    n = len(fine)
    blocks = []
    for s in sorted(ts):
        t = ts[s].t
        if s == 1:
            proj = t
        else:
            coarse = current_sets[s]
            if len(t) != len(coarse):
                raise DimensionError(f"scale {s}: {len(t)} rows for {len(coarse)} voxels")
            proj = project(fine, coarse).gather(t)
        if len(proj) != n:
            raise DimensionError(f"scale {s}: {len(proj)} rows after projection, expected {n}")
        blocks.append(proj)
    cat = np.hstack(blocks) if blocks else np.zeros((n, 0))
    return apply_stack(weights.stack("svaq.fuse"), cat)


def propagate(voxel_features: np.ndarray, point_voxel: np.ndarray) -> np.ndarray:
    """Give each point the feature of the voxel it lies in."""
    if len(point_voxel) and point_voxel.min() < 0:
        raise InvariantError("point without a voxel during propagation")
    return voxel_features[point_voxel]


@dataclass(frozen=True)
class SvaqResult:
    t: Dict[int, AttentionOutput]
    t_o: np.ndarray
    skip: np.ndarray
    voxel_out: np.ndarray
    o_v: np.ndarray  # (N, N_C), index-aligned with the current points
    alignments: Dict[int, QueryAlignment]


def svaq_forward(current_sets: Mapping[int, VoxelSet], hist_sets: Mapping[int, VoxelSet],
                 weights: WeightBundle, mode: str = "dense", threads: int = 1,
                 alignments: Optional[Mapping[int, QueryAlignment]] = None) -> SvaqResult:
    scales = weights.config.scales
    alignments = dict(alignments or {})
    ts = {}
    for s in scales:
        cur, hist = current_sets[s], hist_sets[s]
        if s not in alignments:
            alignments[s] = query(cur, hist)
        ts[s] = attention(cur, alignments[s], hist.features, weights, s, mode, threads)
    fine = current_sets[1]
    t_o = fuse(ts, fine.coords, current_sets, weights)
    skip = apply_stack(weights.stack("svaq.skip"), fine.features)
    voxel_out = weights.norm(skip + t_o)
    o_v = propagate(voxel_out, fine.point_voxel)
    return SvaqResult(ts, t_o, skip, voxel_out, o_v, alignments)
