import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from svq import Point, PointCloud, VoxelConfig
from svq.errors import InvalidPointError
from svq.voxelizer import VoxelCoord, VoxelSet, coords_of, quantize, quantize_xyz, voxelize

from conftest import random_cloud

BASE = (0.2, 0.2, 0.2)


def test_quantize_examples():
    assert quantize(Point(0, 0, 0), 1, BASE) == VoxelCoord(0, 0, 0, 1)
    assert quantize(Point(2.5, -1.3, 0.3), 1, BASE)[:3] == (12, -7, 1)
    assert quantize(Point(2.5, -1.3, 0.3), 2, BASE)[:3] == (6, -4, 0)


def test_quantize_floors_toward_negative_infinity():
    assert quantize_xyz([[-0.01, -0.2, -0.21]], 1, BASE).tolist() == [[-1, -1, -2]]


def test_quantize_rejects_non_finite():
    with pytest.raises(InvalidPointError):
        quantize_xyz([[np.nan, 0, 0]], 1, BASE)


@pytest.mark.parametrize("s", [2, 4])
def test_scale_coherence(rng, s):
    xyz = rng.uniform(-80, 80, size=(20000, 3))
    fine = quantize_xyz(xyz, 1, BASE)
    coarse = quantize_xyz(xyz, s, BASE)
    np.testing.assert_array_equal(coarse, np.floor_divide(fine, s))
    # matches the direct floor(x / (s * w)) formula away from cell boundaries
    direct = np.floor(xyz / (s * np.array(BASE))).astype(np.int64)
    assert np.count_nonzero(direct != coarse) == 0


def test_voxelize_mean_of_two_points():
    c = PointCloud([[0.01, 0.01, 0.01], [0.05, 0.05, 0.05]], [0.2, 0.4], [0.0, 0.0])
    v = voxelize(c, 1, VoxelConfig())
    assert v.coords.tolist() == [[0, 0, 0]]
    np.testing.assert_allclose(v.features[0], [0.03, 0.03, 0.03, 0.3, 0.0], atol=1e-15)


def test_voxelize_empty():
    v = voxelize(PointCloud.empty(), 1, VoxelConfig())
    assert len(v) == 0 and v.width == 5
    assert coords_of(v) == []


def _brute_groups(cloud, scale, base):
    groups = {}
    for p in range(len(cloud)):
        x, y, z = cloud.xyz[p]
        key = tuple(math.floor(v / b) // scale for v, b in zip((x, y, z), base))
        groups.setdefault(key, []).append(p)
    return groups


def test_distinct_cells_keep_point_features(rng):
    cells = rng.choice(20**3, size=100, replace=False)
    ijk = np.stack(np.unravel_index(cells, (20, 20, 20)), axis=1) - 10
    xyz = (ijk + rng.uniform(0.1, 0.9, size=(100, 3))) * 0.2
    c = PointCloud(xyz, rng.uniform(0, 1, 100), np.zeros(100))
    v = voxelize(c, 1, VoxelConfig())
    groups = _brute_groups(c, 1, BASE)
    assert len(v) == len(groups) == 100
    for k, coord in enumerate(v.coords):
        (p,) = groups[tuple(coord)]
        np.testing.assert_array_equal(v.features[k], c.features()[p])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2, 4]))
def test_voxelize_matches_brute_grouping(seed, scale):
    rng = np.random.default_rng(seed)
    c = random_cloud(rng, 300, extent=2.0, inherited_dim=3)
    v = voxelize(c, scale, VoxelConfig())
    groups = _brute_groups(c, scale, BASE)
    assert len(v) == len(groups)
    # order = first occurrence
    assert [tuple(x) for x in v.coords] == list(groups)
    feats = c.features()
    for k, coord in enumerate(v.coords):
        idx = groups[tuple(coord)]
        np.testing.assert_allclose(v.features[k], feats[idx].mean(axis=0), atol=1e-12)
        np.testing.assert_array_equal(v.point_indices(k), idx)


def test_partition_and_permutation_invariance(rng):
    c = random_cloud(rng, 2000, extent=3.0)
    v = voxelize(c, 1, VoxelConfig())
    groups = v.point_groups()
    allidx = np.concatenate(groups)
    assert len(allidx) == len(c) and len(np.unique(allidx)) == len(c)
    assert len({tuple(x) for x in v.coords}) == len(v)

    perm = rng.permutation(len(c))
    c2 = c.replace(xyz=c.xyz[perm], intensity=c.intensity[perm], timestamp=c.timestamp[perm])
    v2 = voxelize(c2, 1, VoxelConfig())
    o1 = np.lexsort(v.coords.T[::-1])
    o2 = np.lexsort(v2.coords.T[::-1])
    np.testing.assert_array_equal(v.coords[o1], v2.coords[o2])
    np.testing.assert_allclose(v.features[o1], v2.features[o2], atol=1e-9)


def test_inherited_padding():
    c = PointCloud([[0.0, 0.0, 0.0]], [1.0], [0.0])
    v = voxelize(c, 1, VoxelConfig(), inherited_dim=4)
    assert v.width == 9
    np.testing.assert_array_equal(v.features[0, 5:], 0.0)


def test_coords_of_and_voxels():
    v = VoxelSet.from_coords([[1, 2, 3]])
    assert coords_of(v) == [VoxelCoord(1, 2, 3, 1)]
    c = PointCloud([[0.01, 0.01, 0.01], [1.0, 1.0, 1.0], [0.02, 0.0, 0.0]], [0, 0, 0], [0, 0, 0])
    vs = voxelize(c, 1, VoxelConfig()).voxels
    assert [x.point_indices.tolist() for x in vs] == [[0, 2], [1]]


def test_coarser_scales_never_add_voxels(rng):
    c = random_cloud(rng, 3000, extent=5.0)
    n = [len(voxelize(c, s, VoxelConfig())) for s in (1, 2, 4)]
    assert n[0] >= n[1] >= n[2]
