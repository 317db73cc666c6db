"""Brute-force references for tests and benchmarks.

Nothing here reuses the production voxelizer, hash table or forward code:
voxels are grouped with plain dicts, matches are found by scanning, and every
layer is evaluated one vector at a time. Agreement with the fast paths is
therefore evidence rather than a tautology. Everything is slow on purpose.
"""

from __future__ import annotations

import math
from typing import Dict, List, Optional, Tuple

import numpy as np

from .hash_index import QueryAlignment

_BLOCK = 256
_R = 1 << 21  # radix of the scan key; fields are biased into [0, _R)


def _scan_keys(coords) -> np.ndarray:
    c = np.asarray(coords, dtype=np.int64).reshape(-1, 3) + (_R // 2)
    return (c[:, 2] * _R + c[:, 1]) * _R + c[:, 0]


def brute_match(current, hist) -> QueryAlignment:
    """For each current voxel, scan every historical voxel for an equal coordinate."""
    a = _scan_keys(current.coords)
    b = _scan_keys(hist.coords)
    out = np.full(len(a), -1, dtype=np.int64)
    if len(b) == 0:
        return QueryAlignment(out, hist.features.shape[1])
    for start in range(0, len(a), _BLOCK):
        eq = a[start:start + _BLOCK, None] == b[None, :]
        hit = eq.any(axis=1)
        out[start:start + _BLOCK] = np.where(hit, eq.argmax(axis=1), -1)
    return QueryAlignment(out, hist.features.shape[1])


def brute_unmatched(hist, current) -> np.ndarray:
    """Rows of ``hist`` whose coordinate occurs nowhere in ``current``."""
    a = _scan_keys(hist.coords)
    b = _scan_keys(current.coords)
    keep = np.ones(len(a), dtype=bool)
    for start in range(0, len(a), _BLOCK):
        keep[start:start + _BLOCK] = ~(a[start:start + _BLOCK, None] == b[None, :]).any(axis=1)
    return np.flatnonzero(keep)


def brute_containment(fine_coords, coarse_coords, scale: int) -> np.ndarray:
    """Per fine voxel, the coarse row whose cell contains it, by scanning."""
    fine = np.asarray(fine_coords, dtype=np.int64).reshape(-1, 3)
    coarse = np.asarray(coarse_coords, dtype=np.int64).reshape(-1, 3)
    out = np.full(len(fine), -1, dtype=np.int64)
    lo = coarse * scale
    for start in range(0, len(fine), _BLOCK):
        f = fine[start:start + _BLOCK, None, :]
        inside = ((f >= lo[None]) & (f < lo[None] + scale)).all(axis=2)
        hit = inside.any(axis=1)
        out[start:start + _BLOCK] = np.where(hit, inside.argmax(axis=1), -1)
    return out


def knn_points(query_pts, ref_pts, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """Exact k nearest neighbors by full distance sort; ties go to the lower index.

    Rows are padded with index -1 and distance inf when ``k`` exceeds the
    reference count.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    q = np.asarray(query_pts, dtype=np.float64).reshape(len(query_pts), -1)
    r = np.asarray(ref_pts, dtype=np.float64).reshape(len(ref_pts), -1)
    kk = min(k, len(r))
    idx = np.full((len(q), k), -1, dtype=np.int64)
    dist = np.full((len(q), k), np.inf)
    if kk == 0:
        return idx, dist
    ref_ids = np.arange(len(r))
    for start in range(0, len(q), _BLOCK):
        qb = q[start:start + _BLOCK]
        d2 = np.zeros((len(qb), len(r)))
        for j in range(q.shape[1]):
            d2 += (qb[:, j, None] - r[None, :, j]) ** 2
        # every reference tied with the k-th distance stays a candidate
        kth = np.partition(d2, kk - 1, axis=1)[:, kk - 1:kk]
        cand = d2 <= kth
        counts = cand.sum(axis=1)
        simple = np.flatnonzero(counts == kk)
        if len(simple):
            ids = np.nonzero(cand[simple])[1].reshape(len(simple), kk)
            dd = np.take_along_axis(d2[simple], ids, axis=1)
            order = np.argsort(dd, axis=1, kind="stable")
            idx[start + simple, :kk] = np.take_along_axis(ids, order, axis=1)
            dist[start + simple, :kk] = np.sqrt(np.take_along_axis(dd, order, axis=1))
        for row in np.flatnonzero(counts != kk):
            drow = d2[row]
            ids = ref_ids[cand[row]]
            best = ids[np.lexsort((ids, drow[ids]))][:kk]
            idx[start + row, :kk] = best
            dist[start + row, :kk] = np.sqrt(drow[best])
    return idx, dist


# -- straight-line forward reference -----------------------------------------

def _group(xyz, feats, scale, base):
    cells: Dict[tuple, List[int]] = {}
    for p, (x, y, z) in enumerate(xyz):
        fine = (math.floor(x / base[0]), math.floor(y / base[1]), math.floor(z / base[2]))
        key = tuple(c // scale for c in fine)
        cells.setdefault(key, []).append(p)
    coords = list(cells)
    means = [np.mean(feats[cells[c]], axis=0) for c in coords]
    point_voxel = [0] * len(xyz)
    for v, c in enumerate(coords):
        for p in cells[c]:
            point_voxel[p] = v
    return coords, means, point_voxel


def _dense(layer, x):
    return np.array([float(np.dot(row, x)) for row in layer.weight]) + layer.bias


def _stack(weights, prefix, x):
    for i in range(3):
        if i:
            x = np.array([max(v, 0.0) for v in x])
        x = _dense(weights.layers[f"{prefix}.{i}"], x)
    return x


def _sigmoid(v):
    if v >= 0:
        return 1.0 / (1.0 + math.exp(-v))
    e = math.exp(v)
    return e / (1.0 + e)


def _raw(cloud, width):
    base = np.column_stack([cloud.xyz, cloud.intensity, cloud.timestamp])
    if width > 5:
        inh = cloud.inherited if cloud.inherited is not None else np.zeros((len(cloud), width - 5))
        base = np.hstack([base, inh])
    return base


def dense_forward_reference(current_cloud, hist_cloud, weights, config=None, *,
                            mode: str = "dense", threshold: Optional[float] = None,
                            target_count: Optional[int] = None, train: bool = False,
                            pool_neighbors: bool = False) -> dict:
    """Recompute every stage of one frame from raw clouds.

    Returns ``T`` (per scale), ``T_o``, ``O_v``, ``S`` (context scores), the
    retained context rows ``R_index`` with score-scaled features ``R``, and
    ``O_c`` with its source history points ``O_c_points``.
    """
    config = config or weights.config
    threshold = config.threshold if threshold is None else threshold
    base = config.base_size
    cur_feats = _raw(current_cloud, 5)
    hist_feats = _raw(hist_cloud, config.history_width)
    dk = config.key_dim

    cur, hist = {}, {}
    for s in config.scales:
        cur[s] = _group(current_cloud.xyz, cur_feats, s, base)
        hist[s] = _group(hist_cloud.xyz, hist_feats, s, base)

    T = {}
    for s in config.scales:
        c_coords, c_means, _ = cur[s]
        h_coords, h_means, _ = hist[s]
        lq, lk, lv = (weights.layers[f"svaq.s{s}.{n}"] for n in "qkv")
        match = []
        for c in c_coords:
            j = -1
            for jj, h in enumerate(h_coords):
                if h == c:
                    j = jj
                    break
            match.append(j)
        keys = [_dense(lk, h_means[j]) for j in match if j >= 0]
        vals = [_dense(lv, h_means[j]) for j in match if j >= 0]
        rows = []
        for i, c in enumerate(c_coords):
            if not vals:
                rows.append(np.zeros(lv.out_dim))
            elif mode == "paired":
                rows.append(_dense(lv, h_means[match[i]]) if match[i] >= 0 else np.zeros(lv.out_dim))
            else:
                q = _dense(lq, c_means[i])
                logits = [float(np.dot(q, kv)) / math.sqrt(dk) for kv in keys]
                top = max(logits)
                ex = [math.exp(v - top) for v in logits]
                tot = math.fsum(ex)
                acc = np.zeros(lv.out_dim)
                for a, v in zip(ex, vals):
                    acc = acc + (a / tot) * v
                rows.append(acc)
        T[s] = np.array(rows).reshape(len(c_coords), lv.out_dim)

    f_coords, f_means, f_pv = cur[1]
    coarse_lookup = {s: {c: i for i, c in enumerate(cur[s][0])} for s in config.scales}
    fused, voxel_out = [], []
    for i, c in enumerate(f_coords):
        parts = []
        for s in config.scales:
            j = coarse_lookup[s].get(tuple(v // s for v in c), -1)
            parts.append(T[s][j] if j >= 0 else np.zeros(T[s].shape[1]))
        t_o = _stack(weights, "svaq.fuse", np.concatenate(parts))
        skip = _stack(weights, "svaq.skip", f_means[i])
        n = weights.norm
        x = skip + t_o
        voxel_out.append((x - n.mean) / np.sqrt(n.var + n.eps) * n.gain + n.bias)
        fused.append(t_o)
    nc = config.channel_dim
    T_o = np.array(fused).reshape(-1, nc)
    O_v = np.array([voxel_out[v] for v in f_pv]).reshape(-1, nc)

    # historical context at scale 1
    h_coords, h_means, h_pv = hist[1]
    cur_cells = set(f_coords)
    ctx = [j for j, h in enumerate(h_coords) if h not in cur_cells]
    width = config.history_width
    union = [h_means[j] for j in ctx] + [np.concatenate([m, np.zeros(width - len(m))])
                                        for m in f_means]
    all_scores = [_sigmoid(_stack(weights, "ca.score", u)[0]) for u in union]
    S = np.array(all_scores[: len(ctx)])

    if train:
        kept = list(range(len(ctx)))
    elif target_count is not None:
        ranked = sorted(range(len(ctx)), key=lambda i: (-S[i], i))
        kept = sorted(ranked[:target_count])
    else:
        kept = [i for i in range(len(ctx)) if S[i] > threshold]
    R = np.array([h_means[ctx[i]] * S[i] for i in kept]).reshape(-1, width)

    kept_coords = [h_coords[ctx[i]] for i in kept]
    pos = {c: r for r, c in enumerate(kept_coords)}
    spc_in = []
    for r, c in enumerate(kept_coords):
        acc, cnt = R[r].copy(), 1
        if pool_neighbors:
            for axis in range(3):
                for step in (1, -1):
                    nb = list(c)
                    nb[axis] += step
                    q = pos.get(tuple(nb))
                    if q is not None:
                        acc = acc + R[q]
                        cnt += 1
        spc_in.append(acc / cnt)
    ctx_out = [_stack(weights, "ca.mlp", R[r]) * _stack(weights, "ca.spc", spc_in[r])
               for r in range(len(kept))]
    voxel_row = {ctx[i]: r for r, i in enumerate(kept)}
    oc_points = [p for p, v in enumerate(h_pv) if v in voxel_row]
    O_c = np.array([ctx_out[voxel_row[h_pv[p]]] for p in oc_points]).reshape(-1, nc)
    return {
        "T": T,
        "T_o": T_o,
        "O_v": O_v,
        "S": S,
        "context": np.array(ctx, dtype=np.int64),
        "R_index": np.array(kept, dtype=np.int64),
        "R": R,
        "O_c": O_c,
        "O_c_points": np.array(oc_points, dtype=np.int64),
    }
