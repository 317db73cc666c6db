"""Frame-by-frame orchestration: fetch history, shunt, attend, activate, inherit."""

from __future__ import annotations

import time as _time
from dataclasses import dataclass
from typing import Iterable, List, Optional

import numpy as np

from . import context as ca
from .config import VoxelConfig
from .errors import DimensionError
from .geometry import PointCloud, Pose
from .hash_index import query, unquery
from .svaq import svaq_forward
from .tfi import FrameRecord, TfiBuffer, fetch, update
from .voxelizer import CURRENT, HISTORICAL, voxelize_scales
from .weights import WeightBundle


@dataclass(frozen=True)
class FrameResult:
    o_v: np.ndarray
    o_c: np.ndarray
    o_c_points: np.ndarray  # index of each o_c row in the fetched history cloud
    scores: np.ndarray
    report: dict
    state: TfiBuffer


class _Timer:
    def __init__(self):
        self.stages = {}
        self._t = _time.perf_counter()

    def lap(self, name):
        now = _time.perf_counter()
        self.stages[name] = now - self._t
        self._t = now


def process_frame(state: TfiBuffer, frame: PointCloud, pose: Pose, time: float,
                  weights: WeightBundle, config: Optional[VoxelConfig] = None, *,
                  mode: Optional[str] = None, threshold: Optional[float] = None,
                  target_count: Optional[int] = None, train: bool = False,
                  threads: int = 1) -> FrameResult:
    """Run one frame through the whole pipeline and return the updated buffer.

    ``target_count`` switches context selection from thresholding to keeping
    the top-scoring voxels. The input ``state`` is never modified.
    """
    config = config or weights.config
    mode = mode or config.attention_mode
    threshold = config.threshold if threshold is None else threshold
    d = config.feature_dim
    if len(frame) == 0:
        raise ValueError("cannot process an empty frame")
    if d != config.channel_dim:
        raise DimensionError(
            f"inherited width d={d} must equal N_C={config.channel_dim}: "
            "the output features are what the buffer inherits"
        )
    clock = _Timer()

    hist = fetch(state, pose, time).with_inherited(d)
    clock.lap("fetch")
    cur_sets = voxelize_scales(frame, config, CURRENT)
    hist_sets = voxelize_scales(hist, config, HISTORICAL, inherited_dim=d)
    clock.lap("voxelize")
    alignments = {s: query(cur_sets[s], hist_sets[s]) for s in config.scales}
    context = unquery(hist_sets[1], cur_sets[1])
    clock.lap("shunt")
    sv = svaq_forward(cur_sets, hist_sets, weights, mode, threads, alignments)
    clock.lap("svaq")
    scored = ca.score(context, cur_sets[1], weights)
    if target_count is not None:
        activated = ca.select_top(scored, target_count)
    else:
        activated = ca.activate(scored, threshold, ca.TRAIN if train else ca.INFER)
    out = ca.extract(activated, weights, config.neighbor_pool)
    clock.lap("context")
    new_state = update(state, FrameRecord.from_cloud(frame, sv.o_v, pose, time))
    clock.lap("inherit")

    report = {
        "frame_id": frame.frame_id,
        "points": len(frame),
        "history_points": len(hist),
        "current_voxels": {str(s): len(cur_sets[s]) for s in config.scales},
        "history_voxels": {str(s): len(hist_sets[s]) for s in config.scales},
        "matched": {str(s): alignments[s].n_matched for s in config.scales},
        "context_voxels": len(context),
        "m_prime": activated.m_prime,
        "context_points": len(out.o_c),
        "buffer_frames": new_state.frame_ids,
        "timings": clock.stages,
    }
    return FrameResult(sv.o_v, out.o_c, out.point_indices, scored.scores, report, new_state)


def run_sequence(frames: Iterable, weights: WeightBundle, config: Optional[VoxelConfig] = None,
                 state: Optional[TfiBuffer] = None, **kw) -> List[FrameResult]:
    """Process ``(cloud, pose, time)`` triples in order, threading the buffer through."""
    config = config or weights.config
    state = state if state is not None else TfiBuffer(config.history_frames)
    results = []
    for cloud, pose, t in frames:
        r = process_frame(state, cloud, pose, t, weights, config, **kw)
        state = r.state
        results.append(r)
    return results
