"""Point, pose and timestamp primitives.

Positions are meters, timestamps are seconds relative to the current frame
(0 for current points, negative for history). A :class:`PointCloud` keeps its
per-point data in column arrays so that every downstream operation can stay
vectorized; :class:`Point` exists for single-record access and construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionError, InvalidPointError, InvalidPoseError

POSE_TOL = 1e-6


def _frozen(a, dtype=np.float64):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Point:
    x: float
    y: float
    z: float
    intensity: float = 0.0
    timestamp: float = 0.0
    inherited: Optional[np.ndarray] = None

    def __post_init__(self):
        vals = (self.x, self.y, self.z, self.intensity, self.timestamp)
        if not all(np.isfinite(v) for v in vals):
            raise InvalidPointError(f"non-finite point field in {vals}")
        if self.inherited is not None:
            object.__setattr__(self, "inherited", _frozen(self.inherited))

    @property
    def xyz(self):
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class PointCloud:
    """An ordered, immutable set of points.

    ``inherited`` is either ``None`` (no inheritance features, e.g. a raw
    current frame) or an ``(N, d)`` array.
    """

    xyz: np.ndarray
    intensity: np.ndarray
    timestamp: np.ndarray
    inherited: Optional[np.ndarray] = None
    frame_id: int = 0

    def __post_init__(self):
        xyz = _frozen(self.xyz).reshape(-1, 3)
        n = len(xyz)
        intensity = _frozen(self.intensity).reshape(-1)
        timestamp = _frozen(self.timestamp).reshape(-1)
        if len(intensity) != n or len(timestamp) != n:
            raise DimensionError(
                f"column lengths differ: xyz={n}, intensity={len(intensity)}, "
                f"timestamp={len(timestamp)}"
            )
        for name, col in (("xyz", xyz), ("intensity", intensity), ("timestamp", timestamp)):
            if not np.all(np.isfinite(col)):
                raise InvalidPointError(f"non-finite values in {name}")
        object.__setattr__(self, "xyz", xyz)
        object.__setattr__(self, "intensity", intensity)
        object.__setattr__(self, "timestamp", timestamp)
        if self.inherited is not None:
            inh = _frozen(self.inherited)
            if inh.ndim != 2 or len(inh) != n:
                raise DimensionError(f"inherited must be ({n}, d), got {inh.shape}")
            object.__setattr__(self, "inherited", inh)
        object.__setattr__(self, "frame_id", int(self.frame_id))

    def __len__(self):
        return len(self.xyz)

    def __getitem__(self, i) -> Point:
        inh = None if self.inherited is None else self.inherited[i]
        x, y, z = self.xyz[i]
        return Point(x, y, z, self.intensity[i], self.timestamp[i], inh)

    @property
    def inherited_dim(self) -> int:
        return 0 if self.inherited is None else self.inherited.shape[1]

    @classmethod
    def empty(cls, inherited_dim=0, frame_id=0):
        inh = np.zeros((0, inherited_dim)) if inherited_dim else None
        return cls(np.zeros((0, 3)), np.zeros(0), np.zeros(0), inh, frame_id)

    @classmethod
    def from_points(cls, points: Sequence[Point], frame_id=0, inherited_dim=None):
        """Build a cloud from records; missing inherited vectors are zero-padded."""
        points = list(points)
        xyz = np.array([[p.x, p.y, p.z] for p in points], dtype=np.float64).reshape(-1, 3)
        intensity = np.array([p.intensity for p in points], dtype=np.float64)
        timestamp = np.array([p.timestamp for p in points], dtype=np.float64)
        dims = {len(p.inherited) for p in points if p.inherited is not None}
        if inherited_dim is None:
            if len(dims) > 1:
                raise DimensionError(f"mixed inherited widths {sorted(dims)}")
            inherited_dim = dims.pop() if dims else 0
        elif dims - {inherited_dim}:
            raise DimensionError(f"inherited width must be {inherited_dim}, got {sorted(dims)}")
        inh = None
        if inherited_dim:
            inh = np.zeros((len(points), inherited_dim))
            for i, p in enumerate(points):
                if p.inherited is not None:
                    inh[i] = p.inherited
        return cls(xyz, intensity, timestamp, inh, frame_id)

    def features(self, inherited_dim: Optional[int] = None) -> np.ndarray:
        """Per-point raw features ``(x, y, z, intensity, timestamp[, inherited])``.

        With ``inherited_dim`` given, the inherited block is zero-padded (or
        must already match) to that width.
        """
        base = np.column_stack([self.xyz, self.intensity, self.timestamp])
        d = self.inherited_dim if inherited_dim is None else inherited_dim
        if d == 0:
            if self.inherited_dim:
                raise DimensionError("cloud carries inherited features but width 0 requested")
            return base
        if self.inherited is None:
            return np.hstack([base, np.zeros((len(self), d))])
        if self.inherited_dim != d:
            raise DimensionError(f"inherited width {self.inherited_dim} != {d}")
        return np.hstack([base, self.inherited])

    def replace(self, **changes) -> "PointCloud":
        kw = dict(
            xyz=self.xyz,
            intensity=self.intensity,
            timestamp=self.timestamp,
            inherited=self.inherited,
            frame_id=self.frame_id,
        )
        kw.update(changes)
        return PointCloud(**kw)

    def with_inherited(self, d: int) -> "PointCloud":
        """Return a cloud whose inherited block has width ``d`` (zeros if absent)."""
        if self.inherited_dim == d:
            return self
        if self.inherited is not None:
            raise DimensionError(f"inherited width {self.inherited_dim} != {d}")
        return self.replace(inherited=np.zeros((len(self), d)) if d else None)

    @staticmethod
    def concatenate(clouds: Sequence["PointCloud"], frame_id=0) -> "PointCloud":
        clouds = list(clouds)
        if not clouds:
            return PointCloud.empty(frame_id=frame_id)
        d = max(c.inherited_dim for c in clouds)
        clouds = [c.with_inherited(d) for c in clouds]
        inh = np.vstack([c.inherited for c in clouds]) if d else None
        return PointCloud(
            np.vstack([c.xyz for c in clouds]),
            np.concatenate([c.intensity for c in clouds]),
            np.concatenate([c.timestamp for c in clouds]),
            inh,
            frame_id,
        )


@dataclass(frozen=True)
class Pose:
    """Rigid transform ``p -> rotation @ p + translation``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = _frozen(self.rotation)
        t = _frozen(self.translation).reshape(-1)
        if r.shape != (3, 3) or t.shape != (3,):
            raise InvalidPoseError(f"bad pose shapes {r.shape}, {t.shape}")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise InvalidPoseError("non-finite pose entries")
        err = np.abs(r @ r.T - np.eye(3)).max()
        if err > POSE_TOL:
            raise InvalidPoseError(f"rotation not orthonormal (max |RR^T - I| = {err:.3g})")
        det = np.linalg.det(r)
        if abs(det - 1.0) > POSE_TOL:
            raise InvalidPoseError(f"rotation determinant {det:.9f} != +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_translation(cls, t):
        return cls(np.eye(3), t)

    @classmethod
    def from_yaw(cls, yaw, t=(0.0, 0.0, 0.0)):
        c, s = np.cos(yaw), np.sin(yaw)
        return cls(np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]), t)

    @classmethod
    def from_3x4(cls, values):
        """Row-major 3x4 ``[R | t]`` as used by KITTI pose files."""
        m = np.asarray(values, dtype=np.float64).reshape(3, 4)
        return cls(m[:, :3], m[:, 3])

    def to_3x4(self) -> np.ndarray:
        return np.hstack([self.rotation, self.translation[:, None]])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3] = self.to_3x4()
        return m

    def apply(self, xyz) -> np.ndarray:
        return np.asarray(xyz, dtype=np.float64) @ self.rotation.T + self.translation

    def __matmul__(self, other: "Pose") -> "Pose":
        return compose(self, other)


def compose(a: Pose, b: Pose) -> Pose:
    """Pose equivalent to applying ``b`` first, then ``a``."""
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def inverse(p: Pose) -> Pose:
    rt = p.rotation.T
    return Pose(rt, -(rt @ p.translation))


def transform(cloud: PointCloud, pose: Pose) -> PointCloud:
    if not isinstance(pose, Pose):
        pose = Pose(*pose)
    return cloud.replace(xyz=pose.apply(cloud.xyz))


def rebase_timestamps(cloud: PointCloud, current_time: float) -> PointCloud:
    return cloud.replace(timestamp=cloud.timestamp - float(current_time))


def nearest_rotation(m) -> np.ndarray:
    """Project a 3x3 matrix onto SO(3) (closest in Frobenius norm)."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=np.float64))
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt
