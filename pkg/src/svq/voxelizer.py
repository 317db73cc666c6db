"""Quantize point clouds into deduplicated voxel sets."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, NamedTuple, Optional

import numpy as np

from .config import VoxelConfig
from .errors import DimensionError, InvalidPointError
from .geometry import Point, PointCloud
from .hash_index import pack_coords

CURRENT = "current"
HISTORICAL = "historical"


class VoxelCoord(NamedTuple):
    i: int
    j: int
    k: int
    scale: int = 1


@dataclass(frozen=True)
class Voxel:
    coord: VoxelCoord
    feature: np.ndarray
    point_indices: np.ndarray


def quantize_xyz(xyz, scale: int, base) -> np.ndarray:
    """Integer voxel coordinates of ``(N, 3)`` positions at ``scale``.

    Coarse cells are derived from the scale-1 cell by integer floor division,
    which equals ``floor(x / (scale * w))`` in exact arithmetic and guarantees
    that every fine voxel nests inside exactly one coarse voxel.
    """
    xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
    base = np.asarray(base, dtype=np.float64)
    if base.shape != (3,) or np.any(base <= 0):
        raise ValueError(f"base size must be three positive lengths, got {base}")
    if scale < 1:
        raise ValueError(f"scale must be a positive integer, got {scale}")
    if not np.all(np.isfinite(xyz)):
        raise InvalidPointError("cannot quantize non-finite coordinates")
    fine = np.floor(xyz / base).astype(np.int64)
    if scale == 1:
        return fine
    return np.floor_divide(fine, int(scale))


def quantize(point, scale: int, base=(0.2, 0.2, 0.2)) -> VoxelCoord:
    xyz = point.xyz if isinstance(point, Point) else point
    i, j, k = quantize_xyz(xyz, scale, base)[0]
    return VoxelCoord(int(i), int(j), int(k), int(scale))


@dataclass(frozen=True)
class VoxelSet:
    """Voxels at one scale, stored column-wise.

    ``coords[k]`` and ``features[k]`` describe voxel ``k``; ``point_voxel[p]``
    is the voxel holding source point ``p``. Voxels are ordered by the first
    occurrence of their coordinate in the source cloud.
    """

    coords: np.ndarray
    features: np.ndarray
    point_voxel: np.ndarray
    scale: int = 1
    tag: str = CURRENT

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.int64).reshape(-1, 3)
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2 or len(feats) != len(coords):
            raise DimensionError(f"features {feats.shape} do not match {len(coords)} coords")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "point_voxel", np.asarray(self.point_voxel, dtype=np.int64))
        object.__setattr__(self, "scale", int(self.scale))

    def __len__(self):
        return len(self.coords)

    @property
    def width(self) -> int:
        return self.features.shape[1]

    @classmethod
    def from_coords(cls, coords, features=None, scale=1, tag=CURRENT, width=5):
        """Voxel set without a source cloud (benchmarks, tests)."""
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
        if features is None:
            features = np.zeros((len(coords), width))
        return cls(coords, features, np.zeros(0, dtype=np.int64), scale, tag)

    def subset(self, idx) -> "VoxelSet":
        """Voxels ``idx`` (in that order); points outside them map to -1."""
        idx = np.asarray(idx, dtype=np.int64)
        remap = np.full(len(self) + 1, -1, dtype=np.int64)
        remap[idx] = np.arange(len(idx))
        return VoxelSet(self.coords[idx], self.features[idx], remap[self.point_voxel],
                        self.scale, self.tag)

    def point_groups(self) -> List[np.ndarray]:
        order = np.argsort(self.point_voxel, kind="stable")
        valid = order[self.point_voxel[order] >= 0]
        counts = np.bincount(self.point_voxel[valid], minlength=len(self))
        return np.split(valid, np.cumsum(counts)[:-1])

    def point_indices(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.point_voxel == k)

    @property
    def voxels(self) -> List[Voxel]:
        groups = self.point_groups() if len(self) else []
        return [
            Voxel(VoxelCoord(*map(int, c), self.scale), f, g)
            for c, f, g in zip(self.coords, self.features, groups)
        ]


def voxelize(cloud: PointCloud, scale: int = 1, config: Optional[VoxelConfig] = None,
             tag: str = CURRENT, inherited_dim: Optional[int] = None) -> VoxelSet:
    """Group points by voxel and average their raw features.

    Features are ``(x, y, z, intensity, timestamp[, inherited])``; the
    inherited block is zero-padded to ``inherited_dim`` when given.
    """
    config = config or VoxelConfig()
    feats = cloud.features(inherited_dim)
    if len(cloud) == 0:
        return VoxelSet(np.zeros((0, 3), np.int64), feats, np.zeros(0, np.int64), scale, tag)

    coords = quantize_xyz(cloud.xyz, scale, config.base_size)
    keys = pack_coords(coords)
    _, first, inv = np.unique(keys, return_index=True, return_inverse=True)
    # relabel unique keys by first appearance in the cloud
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(len(first))
    point_voxel = rank[inv.reshape(-1)]

    order = np.argsort(point_voxel, kind="stable")
    counts = np.bincount(point_voxel, minlength=len(first))
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    sums = np.add.reduceat(feats[order], starts, axis=0)
    means = sums / counts[:, None]
    vcoords = coords[np.sort(first)]
    return VoxelSet(vcoords, means, point_voxel, scale, tag)


def voxelize_scales(cloud: PointCloud, config: VoxelConfig, tag: str = CURRENT,
                    inherited_dim: Optional[int] = None) -> dict:
    return {s: voxelize(cloud, s, config, tag, inherited_dim) for s in config.scales}


def coords_of(vset: VoxelSet) -> List[VoxelCoord]:
    return [VoxelCoord(int(i), int(j), int(k), vset.scale) for i, j, k in vset.coords]
