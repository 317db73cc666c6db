import json

import numpy as np
import pytest

from svq.errors import FormatError
from svq.synth import SENSOR_HEIGHT, Box, SceneSpec, _occluded, load_scene_spec, synth_sequence


def test_zero_objects_is_ground_only():
    (cloud, pose, t), = synth_sequence(SceneSpec(seed=1, ground_points=500), 1)
    assert len(cloud) == 500 and t == 0.0
    np.testing.assert_array_equal(cloud.xyz[:, 2], -SENSOR_HEIGHT)


def test_static_scene_repeats():
    spec = SceneSpec(seed=2, ground_points=300, static_boxes=2)
    (a, _, _), (b, _, t) = synth_sequence(spec, 2)
    np.testing.assert_array_equal(a.xyz, b.xyz)
    np.testing.assert_array_equal(a.intensity, b.intensity)
    assert t == pytest.approx(0.1)


def test_moving_box_advances_by_velocity_times_period():
    spec = SceneSpec(seed=3, ground_points=0, objects=[Box((2, 0, 0), velocity=(2, 0, 0))],
                     points_per_object=2000, resample=True)
    seq = synth_sequence(spec, 4)
    cx = [c.xyz[:, 0].mean() for c, _, _ in seq]
    steps = np.diff(cx)
    np.testing.assert_allclose(steps, 0.2, atol=0.05)


def test_ego_motion_shows_in_poses():
    spec = SceneSpec(seed=0, ground_points=100, ego_velocity=(10, 0, 0))
    seq = synth_sequence(spec, 3)
    np.testing.assert_allclose([p.translation[0] for _, p, _ in seq], [0, 1, 2], atol=1e-12)
    # world-fixed ground point seen from moving sensor
    np.testing.assert_allclose(seq[2][0].xyz[:, 0], seq[0][0].xyz[:, 0] - 2, atol=1e-12)


def test_deterministic():
    spec = SceneSpec(seed=9, ground_points=400, static_boxes=1, moving_boxes=1, resample=True)
    a = synth_sequence(spec, 3)
    b = synth_sequence(spec, 3)
    for (ca, _, _), (cb, _, _) in zip(a, b):
        assert ca.xyz.tobytes() == cb.xyz.tobytes()


def test_occluder_removes_shadowed_points():
    wall = Box((5, 0, 0), size=(0.2, 4, 4))
    spec = SceneSpec(seed=4, ground_points=0, objects=[Box((10, 0, 0), size=(1, 1, 1))],
                     points_per_object=400)
    plain, = synth_sequence(spec, 1)
    hidden, = synth_sequence(SceneSpec(**{**spec.to_dict(), "occluders": [wall]}), 1)
    # the far box vanishes; only the occluder's own visible face survives
    assert len(plain[0]) == 400
    assert np.all(hidden[0].xyz[:, 0] <= 5.1 + 1e-9)


def test_occluded_ray_test():
    box = Box((5, 0, 0), size=(1, 1, 1))
    pts = np.array([[10.0, 0, 0], [3.0, 0, 0], [10.0, 5, 0], [4.5, 0, 0]])
    assert _occluded(pts, np.zeros(3), box).tolist() == [True, False, False, False]


def test_max_range():
    spec = SceneSpec(seed=5, ground_points=2000, max_range=10)
    (c, _, _), = synth_sequence(spec, 1)
    assert np.linalg.norm(c.xyz, axis=1).max() <= 10


def test_bad_spec_positioned(tmp_path):
    p = tmp_path / "s.json"
    p.write_text('{"seed": 1,\n "frames" 2}')
    with pytest.raises(FormatError) as e:
        load_scene_spec(p)
    assert "line 2" in str(e.value.position)
    p.write_text(json.dumps({"nonsense": 1}))
    with pytest.raises(FormatError):
        load_scene_spec(p)
    with pytest.raises(ValueError):
        SceneSpec(frame_period=0)
    with pytest.raises(ValueError):
        synth_sequence(SceneSpec(), 0)
