"""Sparse spatio-temporal voxel query for sequential LiDAR point clouds.

Voxelization, hash-based splitting of history into a voxel-adjacent
neighborhood and a historical context, attention over matched voxels,
threshold-gated context activation, and a temporal feature-inheritance
buffer, each with a brute-force reference in :mod:`svq.oracle`.
"""

from .config import VoxelConfig
from .geometry import Point, PointCloud, Pose, compose, inverse, rebase_timestamps, transform
from .hash_index import QueryAlignment, SparseIndex, build_index, project, query, unquery
from .pipeline import FrameResult, process_frame, run_sequence
from .tfi import FrameRecord, TfiBuffer
from .voxelizer import VoxelCoord, VoxelSet, coords_of, quantize, voxelize
from .weights import WeightBundle

__version__ = "0.1.0"

__all__ = [
    "FrameRecord", "FrameResult", "Point", "PointCloud", "Pose", "QueryAlignment",
    "SparseIndex", "TfiBuffer", "VoxelConfig", "VoxelCoord", "VoxelSet", "WeightBundle",
    "build_index", "compose", "coords_of", "inverse", "process_frame", "project",
    "quantize", "query", "rebase_timestamps", "run_sequence", "transform", "unquery",
    "voxelize",
]
