"""Command-line front end.

Every command writes only under its ``--out``/``--outdir`` and prints a short
summary. JSON reports carry a ``schema_version`` field.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys

import numpy as np

from . import io as sio
from .bench import DEFAULT_SIZES, run_bench
from .config import VoxelConfig
from .errors import SvqError
from .geometry import PointCloud, Pose, compose, inverse, transform
from .hash_index import query, unquery
from .pipeline import process_frame, run_sequence
from .synth import load_scene_spec, synth_sequence
from .tfi import FrameRecord, TfiBuffer
from .voxelizer import CURRENT, HISTORICAL, voxelize, voxelize_scales
from .weights import WeightBundle

log = logging.getLogger("svq")
SCHEMA_VERSION = 1
DEFAULT_PERIOD = 0.1


class UsageError(Exception):
    pass


@contextlib.contextmanager
def _threads(n):
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        yield
        return
    with threadpool_limits(limits=n):
        yield


def _write_json(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _load_config(args) -> VoxelConfig:
    cfg = VoxelConfig.load(getattr(args, "config", None))
    if getattr(args, "base", None):
        cfg = cfg.replace(base_size=tuple(args.base))
    return cfg


def _load_inputs(args):
    """Current cloud plus history records (poses/times aligned with the inputs)."""
    current = sio.read_point_bin(args.current)
    paths = list(args.history)
    if paths and not args.poses:
        raise UsageError("--poses is required when history files are given")
    n = 1 + len(paths)
    if args.poses:
        poses = sio.read_poses(args.poses)
        if len(poses) < n:
            raise UsageError(f"{args.poses} has {len(poses)} poses, {n} needed")
    else:
        poses = [Pose.identity()]
    if getattr(args, "times", None):
        times = sio.read_times(args.times)
        if len(times) < n:
            raise UsageError(f"{args.times} has {len(times)} entries, {n} needed")
    else:
        times = [0.0] + [-DEFAULT_PERIOD * (i + 1) for i in range(len(paths))]
    hist = [(sio.read_point_bin(p), poses[i + 1], times[i + 1]) for i, p in enumerate(paths)]
    return current, poses[0], times[0], hist


# -- commands ---------------------------------------------------------------

def cmd_voxelize(args):
    cfg = _load_config(args)
    cloud = sio.read_point_bin(args.input)
    vset = voxelize(cloud, args.scale, cfg)
    sio.write_voxel_dump(args.out, vset)
    print(f"{len(vset)} voxels")
    return 0


def cmd_shunt(args):
    cfg = _load_config(args)
    current, cur_pose, cur_time, hist = _load_inputs(args)
    to_current = inverse(cur_pose)
    clouds = [
        transform(c, compose(to_current, p)).replace(timestamp=c.timestamp + (t - cur_time))
        for c, p, t in hist
    ]
    hcloud = PointCloud.concatenate(clouds) if clouds else PointCloud.empty()
    cur_sets = voxelize_scales(current, cfg, CURRENT)
    hist_sets = voxelize_scales(hcloud, cfg, HISTORICAL)
    os.makedirs(args.out, exist_ok=True)
    alignments, report = {}, {"schema_version": SCHEMA_VERSION, "scales": {}}
    for s in cfg.scales:
        a = query(cur_sets[s], hist_sets[s])
        alignments[str(s)] = a.indices.tolist()
        report["scales"][str(s)] = {
            "current_voxels": len(cur_sets[s]),
            "history_voxels": len(hist_sets[s]),
            "matched": a.n_matched,
            "placeholders": a.n_placeholders,
        }
    context = unquery(hist_sets[1], cur_sets[1])
    report["context_voxels"] = len(context)
    _write_json(os.path.join(args.out, "alignments.json"), alignments)
    _write_json(os.path.join(args.out, "report.json"), report)
    for s in cfg.scales:
        r = report["scales"][str(s)]
        print(f"scale {s}: {r['matched']}/{r['current_voxels']} matched")
    print(f"context voxels: {len(context)}")
    return 0


def _weights(args, cfg):
    if args.weights and os.path.exists(args.weights):
        return sio.read_weights(args.weights)
    if args.strict:
        raise UsageError(f"weights file {args.weights!r} not found")
    log.warning("no weights file; generating from seed %d", args.seed)
    return WeightBundle.generate(cfg, args.seed)


def _select_kwargs(args):
    return dict(mode=args.mode, threshold=args.threshold, target_count=args.target_count,
                train=args.train, threads=args.threads)


def cmd_forward(args):
    cfg = _load_config(args)
    weights = _weights(args, cfg)
    cfg = weights.config
    current, cur_pose, cur_time, hist = _load_inputs(args)
    d = cfg.feature_dim
    state = TfiBuffer(max(len(hist), 1))
    for fid, (c, p, t) in enumerate(sorted(hist, key=lambda h: h[2])):
        state = state.update(FrameRecord.from_cloud(c, np.zeros((len(c), d)), p, t, fid))
    frame = current.replace(frame_id=len(hist))
    with _threads(args.threads):
        res = process_frame(state, frame, cur_pose, cur_time, weights, cfg, **_select_kwargs(args))
    os.makedirs(args.out, exist_ok=True)
    sio.write_features(os.path.join(args.out, "o_v.bin"), res.o_v, cfg.channel_dim, "o_v")
    sio.write_features(os.path.join(args.out, "o_c.bin"), res.o_c, cfg.channel_dim, "o_c")
    report = dict(res.report, schema_version=SCHEMA_VERSION, mode=args.mode or cfg.attention_mode)
    report.pop("buffer_frames", None)
    _write_json(os.path.join(args.out, "report.json"), report)
    if not args.no_figures:
        from .plotting import plot_scores

        thr = cfg.threshold if args.threshold is None else args.threshold
        plot_scores(res.scores, thr, os.path.join(args.out, "scores.png"))
    print(f"O_v {res.o_v.shape[0]}x{res.o_v.shape[1]}, O_c {res.o_c.shape[0]} rows, "
          f"m_prime {res.report['m_prime']}")
    return 0


def cmd_run(args):
    """Run the pipeline over a directory written by ``synth``."""
    cfg = _load_config(args)
    weights = _weights(args, cfg)
    cfg = weights.config
    poses = sio.read_poses(os.path.join(args.seq, "poses.txt"))
    times = sio.read_times(os.path.join(args.seq, "times.txt"))
    frames = len(poses) if args.frames is None else min(args.frames, len(poses))
    seq = [(sio.read_point_bin(os.path.join(args.seq, f"{i:06d}.bin"), i), poses[i], times[i])
           for i in range(frames)]
    with _threads(args.threads):
        results = run_sequence(seq, weights, cfg, **_select_kwargs(args))
    os.makedirs(args.out, exist_ok=True)
    reports = []
    for i, r in enumerate(results):
        sio.write_features(os.path.join(args.out, f"o_v_{i:06d}.bin"), r.o_v, cfg.channel_dim, "o_v")
        sio.write_features(os.path.join(args.out, f"o_c_{i:06d}.bin"), r.o_c, cfg.channel_dim, "o_c")
        reports.append(r.report)
    sio.write_checkpoint(os.path.join(args.out, "buffer.ckpt"), results[-1].state)
    _write_json(os.path.join(args.out, "report.json"),
                {"schema_version": SCHEMA_VERSION, "frames": reports})
    print(f"{len(results)} frames processed")
    return 0


def cmd_bench(args):
    report = run_bench(args.sizes, args.ratio, args.repeat, brute_max=args.brute_max,
                       knn_max=args.knn_max, seed=args.seed)
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    _write_json(args.out, report)
    if not args.no_figures:
        from .plotting import plot_scaling

        plot_scaling(report, os.path.splitext(args.out)[0] + ".png")
    print("method  n        median_s")
    for r in report["rows"]:
        print(f"{r['method']:<7} {r['n']:<8} {r['median_s']:.6f}")
    for m, s in report["slopes"].items():
        print(f"slope[{m}] = {s:.3f}")
    return 0


def cmd_synth(args):
    spec = load_scene_spec(args.spec) if args.spec else None
    if spec is None:
        from .synth import SceneSpec

        spec = SceneSpec()
    seq = synth_sequence(spec, args.frames)
    os.makedirs(args.outdir, exist_ok=True)
    for i, (cloud, _, _) in enumerate(seq):
        sio.write_point_bin(os.path.join(args.outdir, f"{i:06d}.bin"), cloud)
    sio.write_poses(os.path.join(args.outdir, "poses.txt"), [p for _, p, _ in seq])
    sio.write_times(os.path.join(args.outdir, "times.txt"), [t for _, _, t in seq])
    print(f"{len(seq)} frames, {sum(len(c) for c, _, _ in seq)} points")
    return 0


# -- parser -----------------------------------------------------------------

def _add_common(p):
    p.add_argument("--config", help="JSON config (default: $SVQ_CONFIG or built-in)")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)


def _add_inputs(p):
    p.add_argument("current", help="current frame point binary")
    p.add_argument("history", nargs="*", help="historical frame point binaries")
    p.add_argument("--poses", help="pose file, one line per input (current first)")
    p.add_argument("--times", help="times file aligned with --poses (seconds)")


def _add_model(p):
    p.add_argument("--weights", help="weights file")
    p.add_argument("--seed", type=int, default=0, help="seed when generating weights")
    p.add_argument("--strict", action="store_true", help="fail instead of generating weights")
    p.add_argument("--mode", choices=["dense", "paired"], default=None)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--target-count", type=int, default=None)
    p.add_argument("--train", action="store_true", help="keep every context voxel")
    p.add_argument("--no-figures", action="store_true")


def build_parser():
    ap = argparse.ArgumentParser(prog="svq", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("voxelize", help="voxelize a point binary")
    p.add_argument("input")
    p.add_argument("--scale", type=int, default=1)
    p.add_argument("--base", type=float, nargs=3, metavar=("W", "L", "H"))
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_voxelize)

    p = sub.add_parser("shunt", help="split history into matched neighborhood and context")
    _add_inputs(p)
    p.add_argument("--base", type=float, nargs=3, metavar=("W", "L", "H"))
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_shunt)

    p = sub.add_parser("forward", help="run one frame through the full pipeline")
    _add_inputs(p)
    _add_model(p)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("run", help="run the pipeline over a synthetic sequence directory")
    p.add_argument("--seq", required=True)
    p.add_argument("--frames", type=int, default=None)
    _add_model(p)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="hash query vs. brute-force scaling benchmark")
    p.add_argument("--sizes", type=int, nargs="+", default=list(DEFAULT_SIZES))
    p.add_argument("--ratio", type=float, default=0.3)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--brute-max", type=int, default=40_000)
    p.add_argument("--knn-max", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--out", default="bench/report.json")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("synth", help="write a synthetic sequence")
    p.add_argument("--spec", help="scene spec JSON")
    p.add_argument("--frames", type=int, default=1)
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_synth)
    return ap


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        parser.error(str(e))
    except (SvqError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
