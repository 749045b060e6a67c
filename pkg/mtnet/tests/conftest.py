import numpy as np
import pytest
from PIL import Image

from mtnet.io import frame_path, write_depth_png, write_labels_png

CLASS_COLORS = np.array([[40, 40, 40], [200, 60, 60],
                         [60, 200, 60], [60, 60, 200],
                         [210, 200, 70]], dtype=np.float64)


def make_blocks_corpus(root, n_frames=5, height=64, width=64, num_classes=4,
                       seed=0, raw_scale=1.25):
    """Procedural training corpus: colored rectangles over a background.

    Per class k: a rectangle labeled k, colored CLASS_COLORS[k] plus a
    little pixel noise, at depth 2 + 0.8k meters with a slight
    left-to-right slope. The raw depth handed to the network is the
    ground truth times ``raw_scale``, so refinement has something real
    to correct. Returns (sequence dir, raw maps dir).
    """
    rng = np.random.default_rng(seed)
    for sub in ("seq/left", "seq/gt_depth", "seq/gt_labels", "raw/depth"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    seq, raw = root / "seq", root / "raw"
    for fid in range(n_frames):
        labels = np.zeros((height, width), dtype=np.uint8)
        for k in range(1, num_classes):
            y0 = rng.integers(0, height // 2)
            x0 = rng.integers(0, width // 2)
            labels[y0:y0 + rng.integers(8, height // 2),
                   x0:x0 + rng.integers(8, width // 2)] = k
        depth = (2.0 + 0.8 * labels.astype(np.float32)
                 + np.linspace(0.0, 0.5, width, dtype=np.float32)[None, :])
        rgb = CLASS_COLORS[labels] + rng.normal(0.0, 8.0, (height, width, 3))
        Image.fromarray(np.clip(rgb, 0, 255).astype(np.uint8)).save(
            frame_path(seq, "left", fid))
        write_depth_png(depth, frame_path(seq, "gt_depth", fid))
        write_labels_png(labels, frame_path(seq, "gt_labels", fid))
        write_depth_png(depth * raw_scale, frame_path(raw, "depth", fid))
    return seq, raw


@pytest.fixture(scope="session")
def blocks_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    return make_blocks_corpus(root)


# ---------------------------------------------------------------- criteria

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
    elif rep.failed:
        _CRITERIA[num] = (desc, False)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        desc, ok = _CRITERIA[num]
        terminalreporter.write_line(
            f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {desc}")
