import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from semfuse.scene_io import CameraIntrinsics, ClassPalette, StereoRig
from semfuse.synthetic import garden_rig, garden_scene, render_synthetic

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

# acceptance tests are tagged with @pytest.mark.criterion(n, "...") and the
# outcomes get their own section at the end of the run
_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    num, desc = mark.args
    if rep.when == "call":
        _CRITERIA[num] = (desc, rep.passed)
    elif rep.failed:            # fixture setup blew up before the test body
        _CRITERIA[num] = (desc, False)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        desc, ok = _CRITERIA[num]
        terminalreporter.write_line(
            f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {desc}")


@pytest.fixture
def intrinsics():
    return CameraIntrinsics(fx=721.5, fy=721.5, cx=320.0, cy=240.0, width=640, height=480)


@pytest.fixture
def rig(intrinsics):
    return StereoRig(intrinsics=intrinsics, baseline=0.12)


@pytest.fixture
def palette():
    return ClassPalette(
        names=("ground", "grass", "tree", "flower", "sky"),
        colors=((120, 96, 64), (64, 160, 64), (16, 96, 16), (220, 64, 160), (96, 160, 255)),
    )


def checkerboard(h, w):
    ys, xs = np.indices((h, w))
    return ((ys + xs) % 2).astype(bool)


@pytest.fixture(scope="session")
def garden_sequence(tmp_path_factory):
    """Small noiseless rendering shared by pipeline and CLI tests.

    Session scope because rendering plus ground-truth cloud extraction is
    the slow part; tests that mutate files must copy the tree first.
    """
    root = tmp_path_factory.mktemp("garden") / "seq"
    render_synthetic(garden_scene(3), garden_rig(160, 120), 0.0, root)
    return root
