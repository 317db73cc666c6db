"""Deterministic synthetic LiDAR-like sequences.

A flat ground patch plus axis-aligned boxes, seen from an ego sensor that
moves with constant velocity. Surface samples are drawn once per object (or
once per frame with ``resample``) from numpy's PCG64 generator, so the same
spec and seed give bit-identical clouds on any platform. Occluder boxes hide
every point whose line of sight from the sensor crosses them.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import List, Tuple

import numpy as np

from .errors import FormatError
from .geometry import PointCloud, Pose

SENSOR_HEIGHT = 1.73


@dataclass
class Box:
    center: Tuple[float, float, float]
    size: Tuple[float, float, float] = (4.0, 2.0, 1.5)
    velocity: Tuple[float, float, float] = (0.0, 0.0, 0.0)


@dataclass
class SceneSpec:
    seed: int = 0
    ground_extent: float = 30.0  # half-width of the square ground patch, m
    ground_points: int = 20000
    static_boxes: int = 0
    moving_boxes: int = 0
    box_velocity: Tuple[float, float, float] = (5.0, 0.0, 0.0)
    points_per_object: int = 500
    objects: List[Box] = field(default_factory=list)
    occluders: List[Box] = field(default_factory=list)
    ego_velocity: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    frame_period: float = 0.1
    max_range: float = 0.0  # 0 disables the range cut
    resample: bool = False

    def __post_init__(self):
        self.objects = [b if isinstance(b, Box) else Box(**b) for b in self.objects]
        self.occluders = [b if isinstance(b, Box) else Box(**b) for b in self.occluders]
        for name in ("ground_points", "static_boxes", "moving_boxes", "points_per_object"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.frame_period <= 0:
            raise ValueError("frame_period must be > 0")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown scene keys {sorted(unknown)}")
        return cls(**d)


def load_scene_spec(path) -> SceneSpec:
    text = open(path).read()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: {e.msg}", f"line {e.lineno} column {e.colno}") from None
    if not isinstance(d, dict):
        raise FormatError(f"{path}: scene spec must be a JSON object", "line 1 column 1")
    try:
        return SceneSpec.from_dict(d)
    except (TypeError, ValueError) as e:
        raise FormatError(f"{path}: {e}", "line 1 column 1") from None


def _surface_samples(rng, size, n):
    """``n`` points uniform on the surface of a box of ``size`` centered at 0."""
    sx, sy, sz = size
    areas = np.array([sy * sz, sy * sz, sx * sz, sx * sz, sx * sy, sx * sy])
    face = rng.choice(6, size=n, p=areas / areas.sum())
    u = rng.uniform(-0.5, 0.5, size=(n, 3)) * np.asarray(size)
    axis = face // 2
    sign = np.where(face % 2 == 0, 0.5, -0.5)
    u[np.arange(n), axis] = sign * np.asarray(size)[axis]
    return u


def _occluded(points, origin, box: Box):
    """Points whose segment from ``origin`` passes through ``box`` first."""
    lo = np.asarray(box.center) - np.asarray(box.size) / 2
    hi = np.asarray(box.center) + np.asarray(box.size) / 2
    d = points - origin
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - origin) / d
        t2 = (hi - origin) / d
    inside_slab = (origin >= lo) & (origin <= hi)
    tmin = np.where(d == 0, np.where(inside_slab, -np.inf, np.inf), np.minimum(t1, t2))
    tmax = np.where(d == 0, np.where(inside_slab, np.inf, -np.inf), np.maximum(t1, t2))
    enter = tmin.max(axis=1)
    leave = tmax.min(axis=1)
    return (enter <= leave) & (leave > 0) & (enter < 1 - 1e-6)


class _Scene:
    def __init__(self, spec: SceneSpec):
        self.spec = spec
        self.rng = np.random.default_rng(spec.seed)
        rng = self.rng
        boxes = list(spec.objects)
        e = spec.ground_extent
        for _ in range(spec.static_boxes):
            c = rng.uniform(-e * 0.8, e * 0.8, 2)
            boxes.append(Box((c[0], c[1], -SENSOR_HEIGHT + 0.75)))
        for _ in range(spec.moving_boxes):
            c = rng.uniform(-e * 0.8, e * 0.8, 2)
            boxes.append(Box((c[0], c[1], -SENSOR_HEIGHT + 0.75), velocity=spec.box_velocity))
        self.boxes = boxes + list(spec.occluders)
        self._draw()

    def _draw(self):
        spec, rng = self.spec, self.rng
        e = spec.ground_extent
        g = rng.uniform(-e, e, size=(spec.ground_points, 2))
        self.ground = np.column_stack([g, np.full(len(g), -SENSOR_HEIGHT)])
        self.ground_intensity = rng.uniform(0, 1, len(g))
        self.local = [_surface_samples(rng, b.size, spec.points_per_object) for b in self.boxes]
        self.local_intensity = [rng.uniform(0, 1, spec.points_per_object) for _ in self.boxes]

    def frame(self, index: int):
        spec = self.spec
        if spec.resample and index > 0:
            self._draw()
        t = index * spec.frame_period
        ego = np.asarray(spec.ego_velocity, dtype=np.float64) * t
        pts = [self.ground]
        inten = [self.ground_intensity]
        for b, loc, li in zip(self.boxes, self.local, self.local_intensity):
            center = np.asarray(b.center) + np.asarray(b.velocity) * t
            pts.append(loc + center)
            inten.append(li)
        world = np.vstack(pts)
        intensity = np.concatenate(inten)
        keep = np.ones(len(world), dtype=bool)
        if spec.max_range > 0:
            keep &= np.linalg.norm(world - ego, axis=1) <= spec.max_range
        for occ in spec.occluders:
            keep &= ~_occluded(world, ego, occ)
        pose = Pose.from_translation(ego)
        cloud = PointCloud(world[keep] - ego, intensity[keep], np.zeros(int(keep.sum())),
                           None, index)
        return cloud, pose, t


def synth_sequence(spec: SceneSpec, frames: int) -> List[Tuple[PointCloud, Pose, float]]:
    """``frames`` consecutive ``(cloud, pose, time)`` triples; pose maps sensor to world."""
    if frames < 1:
        raise ValueError("frames must be >= 1")
    scene = _Scene(spec)
    return [scene.frame(i) for i in range(frames)]
