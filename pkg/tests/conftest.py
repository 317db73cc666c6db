import numpy as np
import pytest

from svq import PointCloud, VoxelConfig, WeightBundle


def random_cloud(rng, n, extent=3.0, inherited_dim=0, t=0.0, frame_id=0):
    inh = rng.normal(size=(n, inherited_dim)) if inherited_dim else None
    return PointCloud(
        rng.uniform(-extent, extent, size=(n, 3)),
        rng.uniform(0, 1, n),
        np.full(n, t),
        inh,
        frame_id,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_config():
    return VoxelConfig(base_size=(0.5, 0.5, 0.5), feature_dim=8, channel_dim=8, key_dim=8)


@pytest.fixture
def small_weights(small_config):
    return WeightBundle.generate(small_config, seed=7)


def frame_pair(rng, n_cur=300, n_hist=600, dim=8, extent=3.0):
    """A current cloud and an overlapping history cloud carrying ``dim`` inherited channels."""
    cur = random_cloud(rng, n_cur, extent)
    hist = random_cloud(rng, n_hist, extent, inherited_dim=dim, t=-0.1)
    return cur, hist


def forward_sets(cur, hist, config):
    from svq.voxelizer import CURRENT, HISTORICAL, voxelize_scales

    return (voxelize_scales(cur, config, CURRENT),
            voxelize_scales(hist, config, HISTORICAL, inherited_dim=config.feature_dim))


def random_pose(rng, spread=50.0):
    from svq import Pose

    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return Pose(q, rng.uniform(-spread, spread, 3))


# -- acceptance summary ------------------------------------------------------

_acceptance = {}


def pytest_runtest_logreport(report):
    marks = getattr(report, "_acceptance", None)
    if marks is None:
        return
    n, title = marks
    ok = _acceptance.get(n, (title, True))[1]
    if report.failed or (report.when == "call" and report.skipped):
        ok = False
    _acceptance[n] = (title, ok)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    m = item.get_closest_marker("acceptance")
    if m is not None:
        outcome.get_result()._acceptance = tuple(m.args)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_acceptance):
        title, ok = _acceptance[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}")
