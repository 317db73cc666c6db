"""File formats.

All binary payloads are little-endian. The self-describing formats (feature
dumps, weights, TFI checkpoints) share one layout: a single-line UTF-8 JSON
header terminated by ``\\n``, followed immediately by the flat payload.

* point binary: ``float32[N, 4]`` records ``x, y, z, intensity`` (KITTI).
* pose file: one pose per line, 12 reals, row-major ``[R | t]``.
* feature dump: header ``{"name", "rows", "width", "dtype": "f32le"}``.
* weights: header lists layer names and ``[out, in]`` shapes; payload is each
  layer's weight then bias, then norm mean, var, gain, bias, all f32le.
* TFI checkpoint: header lists frames (id, pose, time, point count); per frame
  the payload holds ``meta`` as f64le ``(P, 5)`` then features as f32le
  ``(P, d)``.
"""

from __future__ import annotations

import json
import os
from typing import List, Optional

import numpy as np

from .config import VoxelConfig
from .errors import FormatError, InvalidPoseError
from .geometry import POSE_TOL, PointCloud, Pose, compose, inverse, nearest_rotation
from .tfi import FrameRecord, TfiBuffer
from .weights import LinearLayer, NormLayer, WeightBundle

F32 = np.dtype("<f4")
F64 = np.dtype("<f8")
POSE_READ_TOL = 1e-4
SCHEMA_VERSION = 1


# -- point binaries ---------------------------------------------------------

def read_point_bin(path, frame_id: int = 0) -> PointCloud:
    data = open(path, "rb").read()
    rem = len(data) % 16
    if rem:
        raise FormatError(
            f"{path}: size {len(data)} is not a multiple of 16 bytes, trailing record truncated",
            len(data) - rem,
        )
    a = np.frombuffer(data, dtype=F32).reshape(-1, 4).astype(np.float64)
    return PointCloud(a[:, :3], a[:, 3], np.zeros(len(a)), None, frame_id)


def write_point_bin(path, cloud: PointCloud):
    a = np.column_stack([cloud.xyz, cloud.intensity]).astype(F32)
    with open(path, "wb") as f:
        f.write(a.tobytes())


# -- poses ------------------------------------------------------------------

def parse_pose(values, position=None) -> Pose:
    m = np.asarray(values, dtype=np.float64).reshape(3, 4)
    r, t = m[:, :3], m[:, 3]
    err = np.abs(r @ r.T - np.eye(3)).max()
    if not np.isfinite(err) or err > POSE_READ_TOL or np.linalg.det(r) <= 0:
        where = f" at line {position}" if position is not None else ""
        raise InvalidPoseError(f"not a rotation{where} (max |RR^T - I| = {err:.3g})")
    if err > POSE_TOL:
        r = nearest_rotation(r)
    return Pose(r, t)


def read_poses(path, calibration: Optional[Pose] = None) -> List[Pose]:
    """Read a KITTI-style pose file.

    With ``calibration`` (sensor-to-camera ``Tr``), each pose ``P`` becomes
    ``Tr^-1 P Tr``, i.e. expressed in the sensor frame.
    """
    poses = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != 12:
                raise FormatError(f"{path}: expected 12 values, got {len(fields)}",
                                  f"line {lineno}")
            try:
                vals = [float(v) for v in fields]
            except ValueError as e:
                raise FormatError(f"{path}: {e}", f"line {lineno}") from None
            pose = parse_pose(vals, lineno)
            if calibration is not None:
                pose = compose(inverse(calibration), compose(pose, calibration))
            poses.append(pose)
    return poses


def format_pose(pose: Pose) -> str:
    return " ".join(repr(float(v)) for v in pose.to_3x4().reshape(-1))


def write_poses(path, poses):
    with open(path, "w") as f:
        for p in poses:
            f.write(format_pose(p) + "\n")


def read_times(path) -> List[float]:
    out = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if line.strip():
                try:
                    out.append(float(line))
                except ValueError:
                    raise FormatError(f"{path}: bad time value", f"line {lineno}") from None
    return out


def write_times(path, times):
    with open(path, "w") as f:
        for t in times:
            f.write(repr(float(t)) + "\n")


# -- header + payload container ---------------------------------------------

def _write_blob(path, header: dict, chunks):
    with open(path, "wb") as f:
        f.write(json.dumps(header, separators=(",", ":")).encode() + b"\n")
        for c in chunks:
            f.write(np.ascontiguousarray(c).tobytes())


def _read_blob(path):
    data = open(path, "rb").read()
    nl = data.find(b"\n")
    if nl < 0:
        raise FormatError(f"{path}: missing header terminator", 0)
    try:
        header = json.loads(data[:nl].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: bad header: {e}", 0) from None
    if not isinstance(header, dict):
        raise FormatError(f"{path}: header is not an object", 0)
    return header, memoryview(data)[nl + 1:], nl + 1


class _Cursor:
    def __init__(self, path, payload, base):
        self.path, self.payload, self.base, self.pos = path, payload, base, 0

    def take(self, dtype, shape):
        n = int(np.prod(shape)) * dtype.itemsize
        if self.pos + n > len(self.payload):
            raise FormatError(
                f"{self.path}: payload ends early ({len(self.payload) - self.pos} bytes left, "
                f"{n} needed)",
                self.base + len(self.payload),
            )
        a = np.frombuffer(self.payload[self.pos:self.pos + n], dtype=dtype).reshape(shape)
        self.pos += n
        return a

    def done(self):
        if self.pos != len(self.payload):
            raise FormatError(
                f"{self.path}: {len(self.payload) - self.pos} unexpected trailing bytes",
                self.base + self.pos,
            )


def _require(header, path, keys):
    missing = [k for k in keys if k not in header]
    if missing:
        raise FormatError(f"{path}: header missing {missing}", 0)


# -- feature dumps ----------------------------------------------------------

def write_features(path, rows, width: Optional[int] = None, name: str = "features"):
    a = np.asarray(rows, dtype=F32)
    if width is None:
        width = a.shape[1] if a.ndim == 2 else 0
    a = a.reshape(-1, width) if width else a.reshape(0, 0)
    header = {"name": name, "rows": int(a.shape[0]), "width": int(width), "dtype": "f32le"}
    _write_blob(path, header, [a])


def read_features(path) -> np.ndarray:
    header, payload, base = _read_blob(path)
    _require(header, path, ["rows", "width", "dtype"])
    if header["dtype"] != "f32le":
        raise FormatError(f"{path}: unsupported dtype {header['dtype']!r}", 0)
    cur = _Cursor(path, payload, base)
    a = cur.take(F32, (int(header["rows"]), int(header["width"])))
    cur.done()
    return a.copy()


# -- weights ----------------------------------------------------------------

def write_weights(path, bundle: WeightBundle):
    names = list(bundle.layers)
    header = {
        "format": "svq-weights",
        "version": SCHEMA_VERSION,
        "seed": bundle.seed,
        "config": bundle.config.to_dict(),
        "layers": [{"name": n, "shape": list(bundle.layers[n].weight.shape)} for n in names],
        "norm": {"width": len(bundle.norm.mean), "eps": bundle.norm.eps},
        "dtype": "f32le",
    }
    chunks = []
    for n in names:
        chunks += [bundle.layers[n].weight.astype(F32), bundle.layers[n].bias.astype(F32)]
    chunks += [v.astype(F32) for v in (bundle.norm.mean, bundle.norm.var,
                                        bundle.norm.gain, bundle.norm.bias)]
    _write_blob(path, header, chunks)


def read_weights(path) -> WeightBundle:
    header, payload, base = _read_blob(path)
    _require(header, path, ["format", "layers", "norm", "config"])
    if header["format"] != "svq-weights":
        raise FormatError(f"{path}: not a weights file", 0)
    cur = _Cursor(path, payload, base)
    layers = {}
    for spec in header["layers"]:
        out_dim, in_dim = spec["shape"]
        w = cur.take(F32, (out_dim, in_dim))
        b = cur.take(F32, (out_dim,))
        layers[spec["name"]] = LinearLayer(w, b, spec["name"])
    width = header["norm"]["width"]
    mean, var, gain, bias = (cur.take(F32, (width,)) for _ in range(4))
    cur.done()
    config = VoxelConfig.from_dict(header["config"])
    bundle = WeightBundle(config, layers, NormLayer(mean, var, gain, bias, header["norm"]["eps"]),
                          header.get("seed", 0))
    bundle.check()
    return bundle


# -- TFI checkpoints --------------------------------------------------------

def write_checkpoint(path, buffer: TfiBuffer):
    d = buffer.records[0].dim if buffer.records else 0
    frames = [
        {"frame_id": r.frame_id, "pose": [float(v) for v in r.pose.to_3x4().reshape(-1)],
         "time": r.time, "points": len(r)}
        for r in buffer.records
    ]
    header = {"format": "svq-tfi", "version": SCHEMA_VERSION, "n": buffer.capacity, "d": d,
              "meta": "f64le", "features": "f32le", "frames": frames}
    chunks = []
    for r in buffer.records:
        chunks += [r.meta.astype(F64), r.features.astype(F32)]
    _write_blob(path, header, chunks)


def read_checkpoint(path) -> TfiBuffer:
    header, payload, base = _read_blob(path)
    _require(header, path, ["format", "n", "d", "frames"])
    if header["format"] != "svq-tfi":
        raise FormatError(f"{path}: not a TFI checkpoint", 0)
    cur = _Cursor(path, payload, base)
    d = int(header["d"])
    records = []
    for fr in header["frames"]:
        p = int(fr["points"])
        meta = cur.take(F64, (p, 5))
        feats = cur.take(F32, (p, d))
        records.append(FrameRecord(fr["frame_id"], Pose.from_3x4(fr["pose"]), fr["time"],
                                   meta, feats))
    cur.done()
    buf = TfiBuffer(int(header["n"]))
    for r in records:
        buf = buf.update(r)
    if len(buf) != len(records):
        raise FormatError(f"{path}: {len(records)} frames exceed window {header['n']}", 0)
    return buf


# -- voxel dumps ------------------------------------------------------------

def write_voxel_dump(outdir, vset, name="voxels"):
    """``<name>.jsonl`` with one coordinate record per voxel plus ``<name>.bin`` features."""
    os.makedirs(outdir, exist_ok=True)
    counts = np.bincount(vset.point_voxel[vset.point_voxel >= 0], minlength=len(vset))
    with open(os.path.join(outdir, f"{name}.jsonl"), "w") as f:
        for (i, j, k), c in zip(vset.coords.tolist(), counts.tolist()):
            f.write(json.dumps({"i": i, "j": j, "k": k, "scale": vset.scale, "points": c}) + "\n")
    write_features(os.path.join(outdir, f"{name}.bin"), vset.features, vset.width, name)
