import json

import numpy as np
import pytest

from svq import PointCloud, Pose
from svq import io as sio
from svq.cli import main
from svq.oracle import brute_match
from svq.synth import SceneSpec
from svq.voxelizer import CURRENT, HISTORICAL, voxelize

from conftest import random_cloud

SMALL = ["--base", "0.5", "0.5", "0.5"]


@pytest.fixture
def cloud_file(tmp_path, rng):
    p = tmp_path / "cur.bin"
    sio.write_point_bin(p, random_cloud(rng, 400, extent=5))
    return p


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"base_size": [0.5, 0.5, 0.5], "feature_dim": 8, "channel_dim": 8,
                             "key_dim": 8}))
    return p


@pytest.fixture
def seq_dir(tmp_path):
    spec = tmp_path / "scene.json"
    spec.write_text(json.dumps(SceneSpec(seed=5, ground_extent=6, ground_points=800,
                                         moving_boxes=1, points_per_object=150,
                                         ego_velocity=(2, 0, 0), resample=True).to_dict()))
    out = tmp_path / "seq"
    assert main(["synth", "--spec", str(spec), "--frames", "3", "--outdir", str(out)]) == 0
    return out


def test_voxelize_empty(tmp_path, capsys):
    (tmp_path / "e.bin").write_bytes(b"")
    assert main(["voxelize", str(tmp_path / "e.bin"), "--out", str(tmp_path / "o")]) == 0
    assert "0 voxels" in capsys.readouterr().out
    assert (tmp_path / "o" / "voxels.jsonl").read_text() == ""


def test_voxelize_deterministic_and_coarsening(tmp_path, cloud_file, capsys):
    counts = []
    for name, scale in [("a", 1), ("b", 1), ("c", 2)]:
        main(["voxelize", str(cloud_file), "--scale", str(scale), "--out", str(tmp_path / name)]
             + SMALL)
        counts.append(int(capsys.readouterr().out.split()[0]))
    for f in ("voxels.jsonl", "voxels.bin"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert counts[2] <= counts[0]


def test_voxelize_truncated_input_fails(tmp_path, capsys):
    (tmp_path / "bad.bin").write_bytes(b"\0" * 20)
    assert main(["voxelize", str(tmp_path / "bad.bin"), "--out", str(tmp_path / "o")]) == 1
    assert "16" in capsys.readouterr().err


def test_shunt_self_history(tmp_path, cloud_file):
    poses = tmp_path / "poses.txt"
    sio.write_poses(poses, [Pose.identity()] * 2)
    out = tmp_path / "o"
    assert main(["shunt", str(cloud_file), str(cloud_file), "--poses", str(poses),
                 "--out", str(out)] + SMALL) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["schema_version"] == 1 and rep["context_voxels"] == 0
    for r in rep["scales"].values():
        assert r["matched"] == r["current_voxels"]


def test_shunt_no_history(tmp_path, cloud_file):
    out = tmp_path / "o"
    assert main(["shunt", str(cloud_file), "--out", str(out)] + SMALL) == 0
    rep = json.loads((out / "report.json").read_text())
    assert all(r["matched"] == 0 for r in rep["scales"].values())
    assert rep["context_voxels"] == 0


def test_shunt_requires_poses(tmp_path, cloud_file):
    with pytest.raises(SystemExit) as e:
        main(["shunt", str(cloud_file), str(cloud_file), "--out", str(tmp_path / "o")])
    assert e.value.code == 2


def test_shunt_counts_match_oracle(tmp_path, seq_dir):
    out = tmp_path / "o"
    files = [str(seq_dir / f"{i:06d}.bin") for i in (2, 1)]
    poses = sio.read_poses(seq_dir / "poses.txt")
    sio.write_poses(tmp_path / "p.txt", [poses[2], poses[1]])
    assert main(["shunt", *files, "--poses", str(tmp_path / "p.txt"), "--out", str(out)]
                + SMALL) == 0
    rep = json.loads((out / "report.json").read_text())
    from svq import VoxelConfig, compose, inverse, transform

    cfg = VoxelConfig(base_size=(0.5, 0.5, 0.5))
    cur = sio.read_point_bin(files[0])
    hist = transform(sio.read_point_bin(files[1]), compose(inverse(poses[2]), poses[1]))
    for s in cfg.scales:
        expect = brute_match(voxelize(cur, s, cfg, CURRENT), voxelize(hist, s, cfg, HISTORICAL))
        assert rep["scales"][str(s)]["matched"] == expect.n_matched
    align = json.loads((out / "alignments.json").read_text())
    assert len(align["1"]) == rep["scales"]["1"]["current_voxels"]


def test_forward(tmp_path, seq_dir, small_cfg, caplog):
    out = tmp_path / "f"
    files = [str(seq_dir / f"{i:06d}.bin") for i in (2, 1, 0)]
    poses = sio.read_poses(seq_dir / "poses.txt")
    sio.write_poses(tmp_path / "p.txt", poses[::-1])
    args = ["forward", *files, "--poses", str(tmp_path / "p.txt"), "--config", str(small_cfg),
            "--threads", "1", "--target-count", "10"]
    assert main(args + ["--out", str(out)]) == 0
    assert "generating" in caplog.text
    rep = json.loads((out / "report.json").read_text())
    o_v = sio.read_features(out / "o_v.bin")
    assert o_v.shape == (len(sio.read_point_bin(files[0])), 8)
    assert rep["m_prime"] == 10
    assert (out / "scores.png").stat().st_size > 0
    assert main(args + ["--out", str(tmp_path / "g"), "--no-figures"]) == 0
    assert (out / "o_v.bin").read_bytes() == (tmp_path / "g" / "o_v.bin").read_bytes()
    assert not (tmp_path / "g" / "scores.png").exists()


def test_forward_strict_without_weights(tmp_path, cloud_file):
    with pytest.raises(SystemExit) as e:
        main(["forward", str(cloud_file), "--strict", "--weights", str(tmp_path / "none.bin"),
              "--out", str(tmp_path / "o")])
    assert e.value.code == 2


def test_forward_paired_equals_dense_on_one_voxel(tmp_path, small_cfg):
    c = PointCloud([[0.1, 0.1, 0.1], [0.2, 0.1, 0.1]], [0.3, 0.6], [0.0, 0.0])
    sio.write_point_bin(tmp_path / "c.bin", c)
    sio.write_poses(tmp_path / "p.txt", [Pose.identity()] * 2)
    dumps = []
    for mode in ("dense", "paired"):
        out = tmp_path / mode
        main(["forward", str(tmp_path / "c.bin"), str(tmp_path / "c.bin"), "--poses",
              str(tmp_path / "p.txt"), "--config", str(small_cfg), "--mode", mode,
              "--no-figures", "--out", str(out)])
        dumps.append((out / "o_v.bin").read_bytes())
    assert dumps[0] == dumps[1]


def test_run_sequence_dir(tmp_path, seq_dir, small_cfg):
    out = tmp_path / "r"
    assert main(["run", "--seq", str(seq_dir), "--config", str(small_cfg), "--threads", "1",
                 "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert len(rep["frames"]) == 3
    buf = sio.read_checkpoint(out / "buffer.ckpt")
    assert buf.frame_ids == [1, 2]
    assert sio.read_features(out / "o_c_000000.bin").shape[0] == 0


def test_synth_deterministic(tmp_path, seq_dir):
    other = tmp_path / "again"
    main(["synth", "--spec", str(tmp_path / "scene.json"), "--frames", "3", "--outdir", str(other)])
    for f in sorted(p.name for p in seq_dir.iterdir()):
        assert (seq_dir / f).read_bytes() == (other / f).read_bytes()
    assert len(sio.read_poses(seq_dir / "poses.txt")) == 3


def test_synth_one_frame_and_bad_spec(tmp_path, capsys):
    assert main(["synth", "--frames", "1", "--outdir", str(tmp_path / "s")]) == 0
    assert sorted(p.name for p in (tmp_path / "s").iterdir()) == ["000000.bin", "poses.txt",
                                                                  "times.txt"]
    (tmp_path / "bad.json").write_text("{\n  oops")
    assert main(["synth", "--spec", str(tmp_path / "bad.json"), "--outdir",
                 str(tmp_path / "t")]) == 1
    assert "line 2" in capsys.readouterr().err


def test_bench_small(tmp_path):
    out = tmp_path / "b" / "report.json"
    assert main(["bench", "--sizes", "1000", "--repeat", "1", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert sorted(r["method"] for r in rep["rows"]) == ["brute", "hash", "knn"]
    assert (tmp_path / "b" / "report.png").exists()
