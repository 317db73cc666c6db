"""Temporal feature inheritance: a sliding window of past frames.

Each record keeps its points in its own sensor frame together with the
frame's absolute pose and time; re-projection into the current frame happens
at fetch time. Point metadata is kept in float64 (float32 cannot hold
80 m ranges to micrometers); inherited features are stored as float32, the
same precision as the checkpoint payload, so a restored buffer behaves
identically to the original.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import DimensionError, FrameOrderError
from .geometry import PointCloud, Pose, compose, inverse


def _readonly(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FrameRecord:
    """One stored frame.

    ``meta`` columns are ``x, y, z, intensity, dt`` in the frame's own
    coordinates, ``dt`` being each point's time offset from ``time``.
    """

    frame_id: int
    pose: Pose  # frame -> world
    time: float  # absolute seconds
    meta: np.ndarray  # (P, 5) float64
    features: np.ndarray  # (P, d) float32

    def __post_init__(self):
        meta = _readonly(self.meta, np.float64).reshape(-1, 5)
        feats = _readonly(self.features, np.float32)
        if feats.ndim != 2 or len(feats) != len(meta):
            raise DimensionError(f"{len(meta)} points but features of shape {feats.shape}")
        object.__setattr__(self, "meta", meta)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "frame_id", int(self.frame_id))
        object.__setattr__(self, "time", float(self.time))

    @classmethod
    def from_cloud(cls, cloud: PointCloud, features, pose: Pose, time: float,
                   frame_id=None) -> "FrameRecord":
        """``cloud`` holds current-frame points (timestamps relative to ``time``)."""
        meta = np.column_stack([cloud.xyz, cloud.intensity, cloud.timestamp])
        fid = cloud.frame_id if frame_id is None else frame_id
        return cls(fid, pose, time, meta, features)

    def __len__(self):
        return len(self.meta)

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class TfiBuffer:
    capacity: int = 2
    records: Tuple[FrameRecord, ...] = ()

    def __len__(self):
        return len(self.records)

    @property
    def frame_ids(self):
        return [r.frame_id for r in self.records]

    def update(self, record: FrameRecord) -> "TfiBuffer":
        return update(self, record)

    def fetch(self, current_pose: Pose, current_time: float) -> PointCloud:
        return fetch(self, current_pose, current_time)


def update(buffer: TfiBuffer, record: FrameRecord) -> TfiBuffer:
    """Append ``record``, evicting the oldest frames beyond the capacity."""
    if buffer.records and record.frame_id <= buffer.records[-1].frame_id:
        raise FrameOrderError(
            f"frame {record.frame_id} is not newer than buffered frame "
            f"{buffer.records[-1].frame_id}"
        )
    if buffer.records and record.dim != buffer.records[-1].dim:
        raise DimensionError(f"feature width {record.dim} != buffered {buffer.records[-1].dim}")
    records = buffer.records + (record,)
    records = records[max(0, len(records) - buffer.capacity):] if buffer.capacity else ()
    return TfiBuffer(buffer.capacity, records)


def fetch(buffer: TfiBuffer, current_pose: Pose, current_time: float,
          frame_id: int = -1) -> PointCloud:
    """All buffered points expressed in the current frame, oldest frame first."""
    if not buffer.records:
        return PointCloud.empty(frame_id=frame_id)
    to_current = inverse(current_pose)
    parts = []
    for rec in buffer.records:
        rel = compose(to_current, rec.pose)
        meta = rec.meta
        parts.append(
            PointCloud(
                rel.apply(meta[:, :3]),
                meta[:, 3],
                (rec.time - float(current_time)) + meta[:, 4],
                rec.features.astype(np.float64),
                frame_id,
            )
        )
    return PointCloud.concatenate(parts, frame_id)
