"""Query-scaling benchmark: hash query vs. quadratic scans."""

from __future__ import annotations

import statistics
import time
from typing import Callable, Dict, Sequence

import numpy as np

from .hash_index import build_index, query
from .oracle import brute_match, knn_points
from .voxelizer import HISTORICAL, VoxelSet

DEFAULT_SIZES = (10_000, 20_000, 40_000, 80_000, 160_000, 320_000)


def make_sets(n: int, ratio: float = 0.3, m_factor: int = 3, seed: int = 0):
    """Random current/historical voxel sets; ``ratio * n`` current voxels have a match."""
    rng = np.random.default_rng(seed)
    m = m_factor * n
    shared = int(round(ratio * n))
    total = n + m - shared
    side = int(np.ceil((8 * total) ** (1 / 3)))
    keys = np.zeros((0, 3), dtype=np.int64)
    while len(keys) < total:
        cand = rng.integers(-side, side, size=(total, 3))
        both = np.vstack([keys, cand])
        _, first = np.unique(both, axis=0, return_index=True)
        keys = both[np.sort(first)]
    keys = keys[:total]
    cur = keys[:n]
    hist = np.vstack([cur[:shared], keys[n:]])
    hist = hist[rng.permutation(len(hist))]
    cur = cur[rng.permutation(n)]
    return (VoxelSet.from_coords(cur), VoxelSet.from_coords(hist, tag=HISTORICAL))


def _median_time(fn: Callable, repeat: int) -> float:
    fn()  # cold run, discarded
    times = []
    for _ in range(max(1, repeat)):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def fit_slope(sizes: Sequence[float], times: Sequence[float]) -> float:
    """Least-squares slope of log(time) against log(size)."""
    if len(sizes) < 2:
        return float("nan")
    return float(np.polyfit(np.log(sizes), np.log(times), 1)[0])


def run_bench(sizes=DEFAULT_SIZES, ratio: float = 0.3, repeat: int = 3, m_factor: int = 3,
              brute_max: int = 40_000, knn_max: int = 10_000, seed: int = 0) -> Dict:
    rows = []
    for n in sizes:
        cur, hist = make_sets(n, ratio, m_factor, seed)

        def hash_run():
            query(cur, hist, build_index(hist))

        rows.append({"method": "hash", "n": n, "m": len(hist),
                     "median_s": _median_time(hash_run, repeat)})
        if n <= brute_max:
            rows.append({"method": "brute", "n": n, "m": len(hist),
                         "median_s": _median_time(lambda: brute_match(cur, hist), repeat)})
        if n <= knn_max:
            # jittered voxel centers: distinct distances keep the k-NN scan on its fast path
            jitter = np.random.default_rng(seed + 1)
            q = cur.coords + jitter.uniform(0, 1, (len(cur), 3))
            r = hist.coords + jitter.uniform(0, 1, (len(hist), 3))
            rows.append({"method": "knn", "n": n, "m": len(hist),
                         "median_s": _median_time(lambda: knn_points(q, r, 1), repeat)})
    slopes = {}
    for method in ("hash", "brute", "knn"):
        pts = [(r["n"], r["median_s"]) for r in rows if r["method"] == method]
        if len(pts) >= 2:
            slopes[method] = fit_slope(*zip(*pts))
    return {
        "schema_version": 1,
        "ratio": ratio,
        "m_factor": m_factor,
        "repeat": repeat,
        "rows": rows,
        "slopes": slopes,
    }
