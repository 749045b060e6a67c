import numpy as np
import pytest
import torch

from conftest import make_blocks_corpus
from mtnet.config import NetConfig
from mtnet.data import DataError, load_training_set, resize_nearest, resize_rgb
from mtnet.io import frame_path, write_depth_png

NET = NetConfig(height=64, width=64, num_classes=4, widths=(8, 16, 32))


def test_loads_all_complete_frames(blocks_corpus):
    seq, raw = blocks_corpus
    ds = load_training_set(seq, raw, NET, clip_max=10.0)
    assert len(ds) == 5
    assert ds.rgb.shape == (5, 3, 64, 64) and ds.rgb.dtype == torch.float32
    assert ds.raw.shape == (5, 1, 64, 64)
    assert ds.gt_depth.shape == (5, 1, 64, 64)
    assert ds.gt_labels.shape == (5, 64, 64) and ds.gt_labels.dtype == torch.int64
    assert 0.0 <= ds.rgb.min() and ds.rgb.max() <= 1.0
    assert 0.0 <= ds.raw.min() and ds.raw.max() <= 1.0   # clip_max-normalized


def test_raw_depth_is_normalized_by_clip_max(blocks_corpus):
    seq, raw = blocks_corpus
    a = load_training_set(seq, raw, NET, clip_max=10.0)
    b = load_training_set(seq, raw, NET, clip_max=20.0)
    assert torch.allclose(a.raw, 2.0 * b.raw, atol=1e-7)


def test_frames_missing_any_source_are_excluded(tmp_path):
    seq, raw = make_blocks_corpus(tmp_path, n_frames=3)
    frame_path(raw, "depth", 1).unlink()
    ds = load_training_set(seq, raw, NET, clip_max=10.0)
    assert ds.frame_ids == [0, 2]


def test_no_complete_frame_is_an_error(tmp_path):
    seq, raw = make_blocks_corpus(tmp_path, n_frames=2)
    for fid in range(2):
        frame_path(seq, "gt_labels", fid).unlink()
    with pytest.raises(DataError, match="no frame"):
        load_training_set(seq, raw, NET, clip_max=10.0)


def test_size_mismatch_between_sources_is_an_error(tmp_path):
    seq, raw = make_blocks_corpus(tmp_path, n_frames=1)
    write_depth_png(np.full((16, 16), 2.0, np.float32), frame_path(raw, "depth", 0))
    with pytest.raises(DataError, match="000000"):
        load_training_set(seq, raw, NET, clip_max=10.0)


def test_out_of_range_label_is_an_error(tmp_path):
    seq, raw = make_blocks_corpus(tmp_path, n_frames=1, num_classes=4)
    net = NetConfig(height=64, width=64, num_classes=3, widths=(8, 16))
    with pytest.raises(DataError, match="out of range"):
        load_training_set(seq, raw, net, clip_max=10.0)


def test_frames_are_resampled_to_network_size(tmp_path):
    seq, raw = make_blocks_corpus(tmp_path, n_frames=2, height=32, width=48)
    net = NetConfig(height=16, width=16, num_classes=4, widths=(4, 8))
    ds = load_training_set(seq, raw, net, clip_max=10.0)
    assert ds.rgb.shape == (2, 3, 16, 16)
    assert ds.gt_labels.shape == (2, 16, 16)
    assert set(ds.gt_labels.unique().tolist()) <= {0, 1, 2, 3}


class TestResizeHelpers:
    def test_same_size_is_identity(self):
        a = np.arange(12, dtype=np.float32).reshape(3, 4)
        assert resize_nearest(a, (3, 4)) is a
        rgb = np.zeros((3, 4, 3), dtype=np.uint8)
        assert resize_rgb(rgb, (3, 4)) is rgb

    def test_nearest_preserves_value_set(self):
        a = np.array([[0, 7], [3, 9]], dtype=np.uint8)
        up = resize_nearest(a, (4, 4))
        assert set(np.unique(up)) == {0, 3, 7, 9}

    def test_integer_upscale_replicates_pixels(self):
        a = np.array([[1.0, 2.0]], dtype=np.float32)
        up = resize_nearest(a, (2, 4))
        assert np.array_equal(up, [[1, 1, 2, 2], [1, 1, 2, 2]])
