import numpy as np
import pytest

from svq import Pose, TfiBuffer, VoxelConfig, WeightBundle, process_frame, run_sequence
from svq import io as sio
from svq.errors import DimensionError
from svq.oracle import brute_match, brute_unmatched
from svq.synth import SceneSpec, synth_sequence
from svq.tfi import fetch
from svq.voxelizer import CURRENT, HISTORICAL, voxelize_scales

from conftest import random_cloud


@pytest.fixture
def scene():
    spec = SceneSpec(seed=11, ground_extent=8, ground_points=1500, static_boxes=2,
                     moving_boxes=1, points_per_object=200, ego_velocity=(3, 0, 0), resample=True)
    return synth_sequence(spec, 3)


def test_cold_start(small_weights, small_config, rng):
    frame = random_cloud(rng, 200)
    r = process_frame(TfiBuffer(2), frame, Pose.identity(), 0.0, small_weights)
    assert r.o_v.shape == (200, small_config.channel_dim)
    assert len(r.o_c) == 0
    assert len(r.state) == 1
    assert all(v == 0 for v in r.report["matched"].values())


def test_identical_frame_matches_fully(small_weights, rng):
    frame = random_cloud(rng, 300)
    first = process_frame(TfiBuffer(2), frame, Pose.identity(), 0.0, small_weights)
    second = process_frame(first.state, frame.replace(frame_id=1), Pose.identity(), 0.1,
                           small_weights)
    rep = second.report
    for s, n in rep["current_voxels"].items():
        assert rep["matched"][s] == n
    assert rep["context_voxels"] == 0 and len(second.o_c) == 0


def test_counts_match_oracle(small_weights, small_config, scene):
    state = TfiBuffer(small_config.history_frames)
    for cloud, pose, t in scene:
        hist = fetch(state, pose, t).with_inherited(small_config.feature_dim)
        cs = voxelize_scales(cloud, small_config, CURRENT)
        hs = voxelize_scales(hist, small_config, HISTORICAL)
        r = process_frame(state, cloud, pose, t, small_weights)
        for s in small_config.scales:
            assert r.report["matched"][str(s)] == brute_match(cs[s], hs[s]).n_matched
        assert r.report["context_voxels"] == len(brute_unmatched(hs[1], cs[1]))
        assert (r.report["matched"]["1"] + r.report["context_voxels"]
                == r.report["history_voxels"]["1"])
        state = r.state
    assert r.report["matched"]["1"] > 0


def test_window_and_report(small_weights, scene):
    results = run_sequence(scene, small_weights)
    assert [r.report["buffer_frames"] for r in results] == [[0], [0, 1], [1, 2]]
    assert set(results[-1].report["timings"]) == {"fetch", "voxelize", "shunt", "svaq",
                                                   "context", "inherit"}
    for (cloud, _, _), r in zip(scene, results):
        assert len(r.o_v) == len(cloud)
        assert len(r.o_c) == len(r.o_c_points)


def test_target_count_and_train(small_weights, scene):
    r = run_sequence(scene, small_weights, target_count=5)[-1]
    assert r.report["m_prime"] == min(5, r.report["context_voxels"])
    r = run_sequence(scene, small_weights, train=True)[-1]
    assert r.report["m_prime"] == r.report["context_voxels"]


def test_checkpoint_restart_reproduces(small_weights, scene, tmp_path):
    full = run_sequence(scene, small_weights)
    head = run_sequence(scene[:2], small_weights)
    sio.write_checkpoint(tmp_path / "b.ckpt", head[-1].state)
    restored = sio.read_checkpoint(tmp_path / "b.ckpt")
    tail = run_sequence(scene[2:], small_weights, state=restored)
    np.testing.assert_array_equal(tail[0].o_v, full[2].o_v)
    np.testing.assert_array_equal(tail[0].o_c, full[2].o_c)


def test_input_state_untouched(small_weights, scene):
    cloud, pose, t = scene[0]
    state = TfiBuffer(2)
    process_frame(state, cloud, pose, t, small_weights)
    assert len(state) == 0


def test_rejects_mismatched_widths(rng):
    w = WeightBundle.generate(VoxelConfig(feature_dim=8, channel_dim=4, key_dim=4), seed=0)
    with pytest.raises(DimensionError):
        process_frame(TfiBuffer(2), random_cloud(rng, 10), Pose.identity(), 0.0, w)


def test_rejects_empty_frame(small_weights):
    from svq import PointCloud

    with pytest.raises(ValueError):
        process_frame(TfiBuffer(2), PointCloud.empty(), Pose.identity(), 0.0, small_weights)
